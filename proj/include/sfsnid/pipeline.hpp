#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sfsnid/checkpoint.hpp"
#include "sfsnid/config.hpp"
#include "sfsnid/data.hpp"
#include "sfsnid/image.hpp"
#include "sfsnid/network.hpp"
#include "sfsnid/objectives.hpp"
#include "sfsnid/optimizer.hpp"

namespace sfsnid {

// ---------------------------------------------------------------------------
// loss log: append-only text records
// ---------------------------------------------------------------------------

class LossLog {
  public:
    explicit LossLog(std::string path) : path_(std::move(path)) {
        if (!std::filesystem::exists(path_)) {
            std::ofstream out(path_);
            require(out.good(), "LossLog: cannot create " + path_);
            out << "# step L_G L_F L_B total\n";
        }
    }

    void append(std::int64_t step, real lg, real lf, real lb, real total) const {
        std::ofstream out(path_, std::ios::app);
        require(out.good(), "LossLog: cannot append to " + path_);
        char line[160];
        std::snprintf(line, sizeof line, "%lld %.12e %.12e %.12e %.12e\n",
                      static_cast<long long>(step), lg, lf, lb, total);
        out << line;
        require(out.good(), "LossLog: write failed for " + path_);
    }

    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

// ---------------------------------------------------------------------------
// batches
// ---------------------------------------------------------------------------

// stack same-sized [3,H,W] images into [B,3,H,W]
inline Tensor stack_images(const std::vector<Tensor>& imgs) {
    require(!imgs.empty(), "stack_images: empty batch");
    const std::vector<int>& s0 = imgs.front().shape();
    require(s0.size() == 3, "stack_images: expected [C,H,W] images");
    std::vector<real> v;
    v.reserve(imgs.size() * imgs.front().size());
    for (const Tensor& img : imgs) {
        require(img.shape() == s0, "stack_images: mismatched image shapes in batch");
        v.insert(v.end(), img.values().begin(), img.values().end());
    }
    return Tensor::from({static_cast<int>(imgs.size()), s0[0], s0[1], s0[2]}, std::move(v));
}

namespace detail {

struct LoadedPair {
    Tensor hazy;
    Tensor clear;
};

inline std::vector<LoadedPair> load_pairs(const DatasetManifest& m,
                                          const std::vector<std::pair<std::string, std::string>>& rels) {
    std::vector<LoadedPair> pairs;
    pairs.reserve(rels.size());
    for (const auto& [hazy_rel, clear_rel] : rels)
        pairs.push_back({load_image(m.resolve(hazy_rel)), load_image(m.resolve(clear_rel))});
    return pairs;
}

// group shuffled indices into batches of at most batch_size (final batch may be short)
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t count, int batch_size,
                                                          Rng& order_rng) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    order_rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < count; at += batch_size) {
        const std::size_t end = std::min(count, at + batch_size);
        batches.emplace_back(idx.begin() + at, idx.begin() + end);
    }
    return batches;
}

inline std::pair<Tensor, Tensor> gather_batch(const std::vector<LoadedPair>& pairs,
                                              const std::vector<std::size_t>& idx) {
    std::vector<Tensor> hazy, clear;
    hazy.reserve(idx.size());
    clear.reserve(idx.size());
    for (std::size_t i : idx) {
        hazy.push_back(pairs[i].hazy);
        clear.push_back(pairs[i].clear);
    }
    // dims must be divisible by 4 for the pyramid; reflect-pad both sides alike
    return {pad_to_multiple(stack_images(hazy), 4), pad_to_multiple(stack_images(clear), 4)};
}

} // namespace detail

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace detail {

struct DivergenceGuard {
    real initial = -1.0;
    int bad_streak = 0;

    void observe(real loss, std::int64_t step) {
        require(std::isfinite(loss),
                "training diverged: non-finite loss at step " + std::to_string(step));
        if (initial < 0.0) initial = loss;
        if (loss > 10.0 * initial) {
            if (++bad_streak >= 50)
                fail("training diverged: loss " + std::to_string(loss) + " above 10x initial " +
                     std::to_string(initial) + " for 50 consecutive steps (step " +
                     std::to_string(step) + ")");
        } else {
            bad_streak = 0;
        }
    }
};

// one optimizer step over one batch; returns the logged components
struct StepResult {
    real lg = 0, lf = 0, lb = 0, total = 0;
};

inline StepResult train_step(Checkpoint& ck, const Config& cfg, const Tensor& hazy,
                             const Tensor& target, bool use_brightness, real lr) {
    Tape::active().reset();
    ck.optimizer.zero_grad();
    ImagePyramid input_pyr = build_pyramid(hazy);
    ImagePyramid target_pyr = build_pyramid(target);
    std::vector<Tensor> preds = forward(input_pyr, ck.params, ck.network);
    Tensor lg = loss_spatial(preds, target_pyr.levels, cfg.loss);
    Tensor lf = loss_frequency(preds, target_pyr.levels, cfg.loss);
    Tensor total = lg + scale(lf, cfg.loss.alpha);
    StepResult res;
    if (use_brightness && cfg.loss.beta != 0.0) {
        Tensor lb = loss_brightness(preds, input_pyr.levels, cfg.loss);
        res.lb = lb.item();
        total = total + scale(lb, cfg.loss.beta);
    }
    Tape::active().backward(total);
    ck.optimizer.step(lr);
    Tape::active().reset();
    res.lg = lg.item();
    res.lf = lf.item();
    res.total = total.item();
    return res;
}

} // namespace detail

// fresh stage-one state: parameters drawn from the config seed
inline Checkpoint initialize_checkpoint(const Config& cfg) {
    cfg.validate();
    Checkpoint ck;
    ck.network = cfg.network;
    Rng rng(cfg.train.seed);
    ck.params = NetworkParams::init(cfg.network, rng);
    ck.optimizer = Adam(ck.params.collect(), cfg.train.beta1, cfg.train.beta2, cfg.train.epsilon);
    ck.stage = TrainStage::initialized;
    ck.full_config_hash = config_hash(cfg);
    ck.network_config_hash = network_config_hash(cfg.network);
    return ck;
}

// Stage one: supervised training on the synthetic pairs (L_G + alpha L_F).
// Batch order is derived per epoch from the config seed, so a resumed run
// retraces the exact trajectory of an uninterrupted one.
inline Checkpoint train_supervised(const DatasetManifest& manifest, const Config& cfg,
                                   const std::string& out_dir,
                                   const Checkpoint* resume = nullptr) {
    cfg.validate();
    require(!manifest.synthetic_pairs.empty(), "train_supervised: manifest has no synthetic pairs");
    std::filesystem::create_directories(out_dir);
    Checkpoint ck = resume ? *resume : initialize_checkpoint(cfg);
    if (resume)
        require(ck.network_config_hash == network_config_hash(cfg.network),
                "train_supervised: checkpoint was built with a different network architecture");
    const std::vector<detail::LoadedPair> pairs = detail::load_pairs(manifest, manifest.synthetic_pairs);
    LossLog log((std::filesystem::path(out_dir) / "loss_train.txt").string());
    detail::DivergenceGuard guard;
    Rng root(cfg.train.seed);
    const std::int64_t first_epoch = ck.epoch;
    for (std::int64_t epoch = first_epoch; epoch < first_epoch + cfg.train.epochs; ++epoch) {
        Rng order = root.derive(static_cast<std::uint64_t>(epoch));
        const real lr = scheduled_lr(cfg.train, epoch);
        for (const auto& batch : detail::make_batches(pairs.size(), cfg.train.batch_size, order)) {
            auto [hazy, clear] = detail::gather_batch(pairs, batch);
            detail::StepResult r =
                detail::train_step(ck, cfg, hazy, clear, /*use_brightness=*/false, lr);
            ++ck.step;
            guard.observe(r.total, ck.step);
            log.append(ck.step, r.lg, r.lf, r.lb, r.total);
        }
        ck.epoch = epoch + 1;
        ck.stage = TrainStage::supervised;
        if (cfg.train.checkpoint_every > 0 && (epoch + 1 - first_epoch) % cfg.train.checkpoint_every == 0 &&
            epoch + 1 < first_epoch + cfg.train.epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_epoch_%06lld.ckpt",
                          static_cast<long long>(epoch + 1));
            save_checkpoint(ck, (std::filesystem::path(out_dir) / name).string());
        }
    }
    if (cfg.train.epochs > 0) ck.stage = TrainStage::supervised;
    save_checkpoint(ck, (std::filesystem::path(out_dir) / "checkpoint_supervised.ckpt").string());
    return ck;
}

// ---------------------------------------------------------------------------
// inference and evaluation
// ---------------------------------------------------------------------------

// dehaze one [3,H,W] image: reflect-pad to a multiple of 4 when needed (noted
// on stderr), run the network, crop back, clamp to [0,1]
inline Tensor infer_image(const Checkpoint& ck, const Tensor& img) {
    require(img.shape().size() == 3 && img.dim(0) == 3,
            "infer_image: expected [3,H,W], got " + shape_str(img.shape()));
    NoGradGuard no_grad;
    const int H = img.dim(1), W = img.dim(2);
    Tensor batched = Tensor::from({1, 3, H, W}, img.values());
    Tensor padded = pad_to_multiple(batched, 4);
    if (padded.dim(2) != H || padded.dim(3) != W)
        std::fprintf(stderr, "infer: reflect-padded %dx%d to %dx%d (multiple of 4), cropping back\n",
                     H, W, padded.dim(2), padded.dim(3));
    std::vector<Tensor> preds = forward(build_pyramid(padded), ck.params, ck.network);
    Tensor out = crop(preds[0], 0, 0, H, W);
    std::vector<real> v = out.values();
    for (real& x : v) x = std::clamp(x, real(0), real(1));
    return Tensor::from({3, H, W}, std::move(v));
}

struct EvalRecord {
    std::size_t index = 0;
    bool has_reference = false;
    real psnr_db = 0;
    real ssim_value = 0;
    real mean_pred = 0;
    real mean_input = 0;
};

struct EvalReport {
    std::string split;
    std::vector<EvalRecord> records;
    real mean_psnr = 0, mean_ssim = 0, mean_pred = 0, mean_input = 0;
    std::size_t referenced = 0; // records contributing to psnr/ssim aggregates
};

// split "synthetic": dehaze each hazy input, score against its clear pair;
// split "real": dehaze each unlabeled image, score against the clear
// reference when the manifest carries one
inline EvalReport evaluate(const Checkpoint& ck, const DatasetManifest& manifest,
                           const std::string& split) {
    EvalReport report;
    report.split = split;
    auto add = [&](std::size_t index, const Tensor& hazy, const Tensor* reference) {
        Tensor pred = infer_image(ck, hazy);
        EvalRecord rec;
        rec.index = index;
        rec.mean_pred = mean_brightness(pred);
        rec.mean_input = mean_brightness(hazy);
        if (reference) {
            rec.has_reference = true;
            rec.psnr_db = psnr(pred, *reference);
            rec.ssim_value = ssim(pred, *reference);
            report.mean_psnr += rec.psnr_db;
            report.mean_ssim += rec.ssim_value;
            ++report.referenced;
        }
        report.mean_pred += rec.mean_pred;
        report.mean_input += rec.mean_input;
        report.records.push_back(rec);
    };
    if (split == "synthetic") {
        require(!manifest.synthetic_pairs.empty(), "evaluate: no synthetic pairs in manifest");
        for (std::size_t i = 0; i < manifest.synthetic_pairs.size(); ++i) {
            Tensor hazy = load_image(manifest.resolve(manifest.synthetic_pairs[i].first));
            Tensor clear = load_image(manifest.resolve(manifest.synthetic_pairs[i].second));
            add(i, hazy, &clear);
        }
    } else if (split == "real") {
        require(!manifest.real_hazy.empty(), "evaluate: no real images in manifest");
        for (std::size_t i = 0; i < manifest.real_hazy.size(); ++i) {
            Tensor hazy = load_image(manifest.resolve(manifest.real_hazy[i]));
            if (!manifest.real_clear_reference.empty()) {
                Tensor ref = load_image(manifest.resolve(manifest.real_clear_reference[i]));
                add(i, hazy, &ref);
            } else {
                add(i, hazy, nullptr);
            }
        }
    } else {
        fail("evaluate: unknown split '" + split + "' (expected synthetic or real)");
    }
    const real n = static_cast<real>(report.records.size());
    report.mean_pred /= n;
    report.mean_input /= n;
    if (report.referenced > 0) {
        report.mean_psnr /= static_cast<real>(report.referenced);
        report.mean_ssim /= static_cast<real>(report.referenced);
    }
    return report;
}

// plain-text report: one record per image, then aggregate means
inline void write_eval_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "write_eval_report: cannot open " + path);
    out << "sfsnid-eval v1\n";
    out << "split " << report.split << "\n";
    out << "count " << report.records.size() << "\n";
    out << "# columns: index psnr ssim mean_pred mean_input (psnr/ssim 'nan' without reference)\n";
    char line[192];
    for (const EvalRecord& r : report.records) {
        if (r.has_reference)
            std::snprintf(line, sizeof line, "%zu %.9f %.9f %.9f %.9f\n", r.index, r.psnr_db,
                          r.ssim_value, r.mean_pred, r.mean_input);
        else
            std::snprintf(line, sizeof line, "%zu nan nan %.9f %.9f\n", r.index, r.mean_pred,
                          r.mean_input);
        out << line;
    }
    if (report.referenced > 0) {
        std::snprintf(line, sizeof line, "aggregate psnr %.9f ssim %.9f mean_pred %.9f mean_input %.9f\n",
                      report.mean_psnr, report.mean_ssim, report.mean_pred, report.mean_input);
    } else {
        std::snprintf(line, sizeof line, "aggregate psnr nan ssim nan mean_pred %.9f mean_input %.9f\n",
                      report.mean_pred, report.mean_input);
    }
    out << line;
    require(out.good(), "write_eval_report: write failed for " + path);
}

// ---------------------------------------------------------------------------
// pseudo labels and fusion retraining
// ---------------------------------------------------------------------------

// Stage two input: dehaze every unlabeled image with the stage-one model and
// write it as that image's pseudo label. Outputs land in out_dir/pseudo plus
// an updated manifest at out_dir/manifest_pseudo.txt whose existing entries
// are resolved to absolute paths when out_dir differs from the dataset root.
inline DatasetManifest generate_pseudo_labels(const Checkpoint& ck, const DatasetManifest& manifest,
                                              const std::string& out_dir) {
    require(ck.stage != TrainStage::initialized,
            "generate_pseudo_labels: checkpoint has never been trained");
    require(!manifest.real_hazy.empty(), "generate_pseudo_labels: manifest has no real images");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "pseudo");
    const bool same_root = fs::weakly_canonical(fs::path(out_dir)) ==
                           fs::weakly_canonical(fs::path(manifest.base_dir));
    DatasetManifest updated;
    updated.base_dir = out_dir;
    auto carry = [&](const std::string& rel) {
        return same_root ? rel : fs::weakly_canonical(fs::path(manifest.resolve(rel))).string();
    };
    for (const auto& [hazy, clear] : manifest.synthetic_pairs)
        updated.synthetic_pairs.emplace_back(carry(hazy), carry(clear));
    for (const auto& rel : manifest.real_hazy) updated.real_hazy.push_back(carry(rel));
    for (const auto& rel : manifest.real_clear_reference)
        updated.real_clear_reference.push_back(carry(rel));
    char name[64];
    for (std::size_t i = 0; i < manifest.real_hazy.size(); ++i) {
        Tensor hazy = load_image(manifest.resolve(manifest.real_hazy[i]));
        Tensor label = infer_image(ck, hazy);
        std::snprintf(name, sizeof name, "pseudo/pseudo_%04zu.png", i);
        save_image(label, updated.resolve(name));
        updated.pseudo_labels.emplace_back(name);
    }
    save_manifest(updated, (fs::path(out_dir) / "manifest_pseudo.txt").string());
    return updated;
}

// Stage two: synthetic and pseudo-labeled batches alternate round-robin
// (mix_ratio synthetic batches per pseudo batch); every batch adds the
// brightness term against its own hazy input per the full objective.
inline Checkpoint retrain_fused(const Checkpoint& start, const DatasetManifest& manifest,
                                const Config& cfg, const std::string& out_dir) {
    cfg.validate();
    require(start.stage != TrainStage::initialized,
            "retrain_fused: refusing a checkpoint that has never been trained");
    require(start.network_config_hash == network_config_hash(cfg.network),
            "retrain_fused: checkpoint was built with a different network architecture");
    require(!manifest.synthetic_pairs.empty(), "retrain_fused: manifest has no synthetic pairs");
    manifest.validate();
    std::filesystem::create_directories(out_dir);
    Checkpoint ck = start;
    const std::vector<detail::LoadedPair> synth = detail::load_pairs(manifest, manifest.synthetic_pairs);
    std::vector<detail::LoadedPair> pseudo;
    pseudo.reserve(manifest.pseudo_labels.size());
    for (std::size_t i = 0; i < manifest.pseudo_labels.size(); ++i)
        pseudo.push_back({load_image(manifest.resolve(manifest.real_hazy[i])),
                          load_image(manifest.resolve(manifest.pseudo_labels[i]))});
    LossLog log((std::filesystem::path(out_dir) / "loss_retrain.txt").string());
    detail::DivergenceGuard guard;
    Rng root(cfg.train.seed);
    const std::int64_t first_epoch = ck.epoch;
    std::size_t pseudo_cursor = 0;
    for (std::int64_t epoch = first_epoch; epoch < first_epoch + cfg.train.epochs; ++epoch) {
        Rng order = root.derive(static_cast<std::uint64_t>(epoch));
        const real lr = scheduled_lr(cfg.train, epoch);
        const auto synth_batches = detail::make_batches(synth.size(), cfg.train.batch_size, order);
        std::vector<std::vector<std::size_t>> pseudo_batches;
        if (!pseudo.empty()) {
            Rng pseudo_order = root.derive(0xB1E55ED0ULL + static_cast<std::uint64_t>(epoch));
            pseudo_batches = detail::make_batches(pseudo.size(), cfg.train.batch_size, pseudo_order);
        }
        int since_pseudo = 0;
        auto run_batch = [&](const std::vector<detail::LoadedPair>& pool,
                             const std::vector<std::size_t>& batch) {
            auto [hazy, target] = detail::gather_batch(pool, batch);
            detail::StepResult r =
                detail::train_step(ck, cfg, hazy, target, /*use_brightness=*/true, lr);
            ++ck.step;
            guard.observe(r.total, ck.step);
            log.append(ck.step, r.lg, r.lf, r.lb, r.total);
        };
        for (const auto& batch : synth_batches) {
            run_batch(synth, batch);
            if (!pseudo_batches.empty() && ++since_pseudo >= cfg.train.mix_ratio) {
                run_batch(pseudo, pseudo_batches[pseudo_cursor % pseudo_batches.size()]);
                ++pseudo_cursor;
                since_pseudo = 0;
            }
        }
        ck.epoch = epoch + 1;
    }
    ck.stage = TrainStage::fused;
    save_checkpoint(ck, (std::filesystem::path(out_dir) / "checkpoint_fused.ckpt").string());
    return ck;
}

} // namespace sfsnid
