#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "sfsnid/config.hpp"
#include "sfsnid/network.hpp"
#include "sfsnid/optimizer.hpp"

namespace sfsnid {

// Training stage recorded in a checkpoint; retraining refuses anything below
// `supervised`.
enum class TrainStage : std::uint32_t { initialized = 0, supervised = 1, fused = 2 };

inline const char* stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::initialized: return "initialized";
        case TrainStage::supervised: return "supervised";
        case TrainStage::fused: return "fused";
    }
    return "unknown";
}

struct Checkpoint {
    NetworkConfig network;
    NetworkParams params;
    Adam optimizer; // moment buffers reference params' tensors
    TrainStage stage = TrainStage::initialized;
    std::int64_t epoch = 0; // epochs completed
    std::int64_t step = 0;  // optimizer steps completed
    std::uint64_t full_config_hash = 0;
    std::uint64_t network_config_hash = 0;
};

// hash of the architecture-relevant section only; loading enforces this one
inline std::uint64_t network_config_hash(const NetworkConfig& net) {
    Config probe;
    probe.network = net;
    const std::string text = canonical_config_text(probe);
    const std::string section = text.substr(0, text.find("[train]"));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : section) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'S', 'N', 'C', 'K', 'P', '1'};

struct Writer {
    std::FILE* f;
    const std::string& path;
    void bytes(const void* p, std::size_t n) const {
        require(std::fwrite(p, 1, n, f) == n, "save_checkpoint: short write to " + path);
    }
    void u32(std::uint32_t v) const { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) const { bytes(&v, sizeof v); }
    void i64(std::int64_t v) const { bytes(&v, sizeof v); }
    void reals(const std::vector<real>& v) const {
        u64(v.size());
        if (!v.empty()) bytes(v.data(), v.size() * sizeof(real));
    }
};

struct Reader {
    std::FILE* f;
    const std::string& path;
    void bytes(void* p, std::size_t n) const {
        require(std::fread(p, 1, n, f) == n, "load_checkpoint: truncated file " + path);
    }
    std::uint32_t u32() const { std::uint32_t v; bytes(&v, sizeof v); return v; }
    std::uint64_t u64() const { std::uint64_t v; bytes(&v, sizeof v); return v; }
    std::int64_t i64() const { std::int64_t v; bytes(&v, sizeof v); return v; }
    std::vector<real> reals() const {
        const std::uint64_t n = u64();
        require(n < (1ULL << 32), "load_checkpoint: implausible array size in " + path);
        std::vector<real> v(n);
        if (n) bytes(v.data(), n * sizeof(real));
        return v;
    }
};

} // namespace detail

// Binary layout (native endianness, fixed field order):
// magic, stage, epoch, step, full config hash, network config hash,
// network dims, parameter tensors (shape + values), Adam scalars and moments.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "save_checkpoint: cannot open " + path + " for writing");
    detail::FilePtr guard(f);
    detail::Writer w{f, path};
    w.bytes(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(ck.stage));
    w.i64(ck.epoch);
    w.i64(ck.step);
    w.u64(ck.full_config_hash);
    w.u64(ck.network_config_hash);
    w.u32(static_cast<std::uint32_t>(ck.network.base_channels));
    w.u32(static_cast<std::uint32_t>(ck.network.sfii_blocks_per_stage));
    w.u32(static_cast<std::uint32_t>(ck.network.window));
    const std::vector<Tensor> params = ck.params.collect();
    w.u64(params.size());
    for (const Tensor& p : params) {
        const auto& shape = p.shape();
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
        w.reals(p.values());
    }
    // Adam state
    w.i64(ck.optimizer.steps);
    w.u64(ck.optimizer.m.size());
    require(ck.optimizer.m.size() == params.size() || ck.optimizer.m.empty(),
            "save_checkpoint: optimizer state does not match parameter list");
    for (std::size_t i = 0; i < ck.optimizer.m.size(); ++i) {
        w.reals(ck.optimizer.m[i]);
        w.reals(ck.optimizer.v[i]);
    }
}

inline Checkpoint load_checkpoint(const std::string& path, const TrainConfig& train_cfg) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    require(f != nullptr, "load_checkpoint: cannot open " + path);
    detail::FilePtr guard(f);
    detail::Reader r{f, path};
    char magic[sizeof detail::kCheckpointMagic];
    r.bytes(magic, sizeof magic);
    require(std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) == 0,
            "load_checkpoint: bad magic in " + path);
    Checkpoint ck;
    const std::uint32_t stage = r.u32();
    require(stage <= static_cast<std::uint32_t>(TrainStage::fused),
            "load_checkpoint: unknown stage marker in " + path);
    ck.stage = static_cast<TrainStage>(stage);
    ck.epoch = r.i64();
    ck.step = r.i64();
    ck.full_config_hash = r.u64();
    ck.network_config_hash = r.u64();
    ck.network.base_channels = static_cast<int>(r.u32());
    ck.network.sfii_blocks_per_stage = static_cast<int>(r.u32());
    ck.network.window = static_cast<int>(r.u32());
    ck.network.validate();
    // materialize parameters with the right shapes, then overwrite values
    Rng scratch(0);
    ck.params = NetworkParams::init(ck.network, scratch);
    std::vector<Tensor> params = ck.params.collect();
    const std::uint64_t n_params = r.u64();
    require(n_params == params.size(), "load_checkpoint: parameter count mismatch in " + path);
    for (Tensor& p : params) {
        const std::uint32_t rank = r.u32();
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        require(shape == p.shape(), "load_checkpoint: parameter shape mismatch in " + path);
        std::vector<real> values = r.reals();
        require(values.size() == p.size(), "load_checkpoint: parameter size mismatch in " + path);
        p.node()->value = std::move(values);
    }
    ck.optimizer = Adam(params, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon);
    ck.optimizer.steps = r.i64();
    const std::uint64_t n_moments = r.u64();
    require(n_moments == params.size() || n_moments == 0,
            "load_checkpoint: optimizer moment count mismatch in " + path);
    for (std::uint64_t i = 0; i < n_moments; ++i) {
        std::vector<real> mi = r.reals();
        std::vector<real> vi = r.reals();
        require(mi.size() == ck.optimizer.m[i].size() && vi.size() == ck.optimizer.v[i].size(),
                "load_checkpoint: optimizer moment size mismatch in " + path);
        ck.optimizer.m[i] = std::move(mi);
        ck.optimizer.v[i] = std::move(vi);
    }
    return ck;
}

} // namespace sfsnid
