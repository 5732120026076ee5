#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfsnid/data.hpp"
#include "sfsnid/network.hpp"
#include "sfsnid/objectives.hpp"

namespace sfsnid {

// ---------------------------------------------------------------------------
// training configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    int batch_size = 4;
    int image_size = 256; // expected training resolution (toy configs use 64)
    real lr = 1e-4;
    real lr_decay = 0.95;
    int lr_decay_every = 10; // epochs
    real beta1 = 0.9;
    real beta2 = 0.999;
    real epsilon = 1e-8;
    int epochs = 100;
    int mix_ratio = 1;        // synthetic batches per pseudo batch during retraining
    int checkpoint_every = 0; // extra checkpoints every N epochs; 0 = final only
    std::uint64_t seed = 0;

    void validate() const {
        require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
        require(image_size >= 8, "TrainConfig: image_size must be >= 8");
        require(lr > 0.0, "TrainConfig: lr must be > 0");
        require(lr_decay > 0.0 && lr_decay <= 1.0, "TrainConfig: lr_decay must be in (0,1]");
        require(lr_decay_every >= 1, "TrainConfig: lr_decay_every must be >= 1");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "TrainConfig: betas must be in [0,1)");
        require(epsilon > 0.0, "TrainConfig: epsilon must be > 0");
        require(epochs >= 0, "TrainConfig: epochs must be >= 0");
        require(mix_ratio >= 1, "TrainConfig: mix_ratio must be >= 1");
        require(checkpoint_every >= 0, "TrainConfig: checkpoint_every must be >= 0");
    }
};

// lr(epoch) = lr * decay^floor(epoch / every)
inline real scheduled_lr(const TrainConfig& cfg, std::int64_t epoch) {
    real lr = cfg.lr;
    for (std::int64_t k = 0; k < epoch / cfg.lr_decay_every; ++k) lr *= cfg.lr_decay;
    return lr;
}

struct Config {
    NetworkConfig network;
    TrainConfig train;
    LossWeights loss;
    DataConfig data;

    void validate() const {
        network.validate();
        train.validate();
        loss.validate();
        data.validate();
    }
};

// ---------------------------------------------------------------------------
// structured-text (INI) parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline real parse_real(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    real out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        fail("config: bad numeric value '" + v + "' for " + where);
    }
    require(pos == v.size(), "config: trailing junk in value '" + v + "' for " + where);
    return out;
}

inline int parse_int(const std::string& v, const std::string& where) {
    const real r = parse_real(v, where);
    const int i = static_cast<int>(r);
    require(static_cast<real>(i) == r, "config: expected integer for " + where + ", got " + v);
    return i;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        fail("config: bad unsigned value '" + v + "' for " + where);
    }
    require(pos == v.size(), "config: trailing junk in value '" + v + "' for " + where);
    return out;
}

inline void apply_config_key(Config& cfg, const std::string& section, const std::string& key,
                             const std::string& value) {
    const std::string where = "[" + section + "] " + key;
    auto r = [&] { return parse_real(value, where); };
    auto i = [&] { return parse_int(value, where); };
    if (section == "network") {
        if (key == "base_channels") cfg.network.base_channels = i();
        else if (key == "blocks_per_stage") cfg.network.sfii_blocks_per_stage = i();
        else if (key == "window") cfg.network.window = i();
        else fail("config: unknown key " + where);
    } else if (section == "train") {
        if (key == "batch_size") cfg.train.batch_size = i();
        else if (key == "image_size") cfg.train.image_size = i();
        else if (key == "lr") cfg.train.lr = r();
        else if (key == "lr_decay") cfg.train.lr_decay = r();
        else if (key == "lr_decay_every") cfg.train.lr_decay_every = i();
        else if (key == "beta1") cfg.train.beta1 = r();
        else if (key == "beta2") cfg.train.beta2 = r();
        else if (key == "epsilon") cfg.train.epsilon = r();
        else if (key == "epochs") cfg.train.epochs = i();
        else if (key == "mix_ratio") cfg.train.mix_ratio = i();
        else if (key == "checkpoint_every") cfg.train.checkpoint_every = i();
        else if (key == "seed") cfg.train.seed = parse_u64(value, where);
        else fail("config: unknown key " + where);
    } else if (section == "loss") {
        if (key == "lambda_g") cfg.loss.lambda_g = r();
        else if (key == "lambda_f") cfg.loss.lambda_f = r();
        else if (key == "lambda_b") cfg.loss.lambda_b = r();
        else if (key == "alpha") cfg.loss.alpha = r();
        else if (key == "beta") cfg.loss.beta = r();
        else if (key == "kappa") cfg.loss.kappa = r();
        else if (key == "xi") cfg.loss.xi = r();
        else if (key == "gamma0") cfg.loss.gamma[0] = i();
        else if (key == "gamma1") cfg.loss.gamma[1] = i();
        else if (key == "gamma2") cfg.loss.gamma[2] = i();
        else fail("config: unknown key " + where);
    } else if (section == "data") {
        if (key == "count_pairs") cfg.data.count_pairs = i();
        else if (key == "count_real") cfg.data.count_real = i();
        else if (key == "image_size") { cfg.data.paired.image_size = i(); cfg.data.shifted.image_size = cfg.data.paired.image_size; }
        else if (key == "t_min") cfg.data.paired.t_min = r();
        else if (key == "airlight_low") cfg.data.paired.airlight_low = r();
        else if (key == "airlight_high") cfg.data.paired.airlight_high = r();
        else if (key == "lights_min") cfg.data.paired.lights_min = i();
        else if (key == "lights_max") cfg.data.paired.lights_max = i();
        else if (key == "glow_sigma") cfg.data.paired.glow_sigma = r();
        else if (key == "glow_intensity_low") cfg.data.paired.glow_intensity_low = r();
        else if (key == "glow_intensity_high") cfg.data.paired.glow_intensity_high = r();
        else if (key == "noise_sigma") cfg.data.paired.noise_sigma = r();
        else if (key == "gamma") cfg.data.paired.gamma = r();
        else if (key == "shifted_airlight_low") cfg.data.shifted.airlight_low = r();
        else if (key == "shifted_airlight_high") cfg.data.shifted.airlight_high = r();
        else if (key == "shifted_glow_sigma") cfg.data.shifted.glow_sigma = r();
        else if (key == "shifted_glow_intensity_low") cfg.data.shifted.glow_intensity_low = r();
        else if (key == "shifted_glow_intensity_high") cfg.data.shifted.glow_intensity_high = r();
        else if (key == "shifted_noise_sigma") cfg.data.shifted.noise_sigma = r();
        else if (key == "shifted_gamma") cfg.data.shifted.gamma = r();
        else fail("config: unknown key " + where);
    } else {
        fail("config: unknown section [" + section + "]");
    }
}

} // namespace detail

// parse `key = value` lines under [network]/[train]/[loss]/[data] sections;
// '#' and ';' start comments; unknown sections or keys are errors
inline Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']', "config: malformed section header at line " +
                                            std::to_string(lineno) + ": " + line);
            section = detail::trim(line.substr(1, line.size() - 2));
            require(!section.empty(), "config: empty section name at line " + std::to_string(lineno));
            continue;
        }
        const std::size_t eq = line.find('=');
        require(eq != std::string::npos,
                "config: expected 'key = value' at line " + std::to_string(lineno) + ": " + line);
        require(!section.empty(), "config: key before any section at line " + std::to_string(lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        require(!key.empty() && !value.empty(),
                "config: empty key or value at line " + std::to_string(lineno));
        detail::apply_config_key(cfg, section, key, value);
    }
    cfg.validate();
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// canonical, whitespace-normalized rendering used for hashing and round-trips
inline std::string canonical_config_text(const Config& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[network]\n"
        << "base_channels = " << cfg.network.base_channels << "\n"
        << "blocks_per_stage = " << cfg.network.sfii_blocks_per_stage << "\n"
        << "window = " << cfg.network.window << "\n";
    out << "[train]\n"
        << "batch_size = " << cfg.train.batch_size << "\n"
        << "image_size = " << cfg.train.image_size << "\n"
        << "lr = " << cfg.train.lr << "\n"
        << "lr_decay = " << cfg.train.lr_decay << "\n"
        << "lr_decay_every = " << cfg.train.lr_decay_every << "\n"
        << "beta1 = " << cfg.train.beta1 << "\n"
        << "beta2 = " << cfg.train.beta2 << "\n"
        << "epsilon = " << cfg.train.epsilon << "\n"
        << "epochs = " << cfg.train.epochs << "\n"
        << "mix_ratio = " << cfg.train.mix_ratio << "\n"
        << "checkpoint_every = " << cfg.train.checkpoint_every << "\n"
        << "seed = " << cfg.train.seed << "\n";
    out << "[loss]\n"
        << "lambda_g = " << cfg.loss.lambda_g << "\n"
        << "lambda_f = " << cfg.loss.lambda_f << "\n"
        << "lambda_b = " << cfg.loss.lambda_b << "\n"
        << "alpha = " << cfg.loss.alpha << "\n"
        << "beta = " << cfg.loss.beta << "\n"
        << "kappa = " << cfg.loss.kappa << "\n"
        << "xi = " << cfg.loss.xi << "\n"
        << "gamma0 = " << cfg.loss.gamma[0] << "\n"
        << "gamma1 = " << cfg.loss.gamma[1] << "\n"
        << "gamma2 = " << cfg.loss.gamma[2] << "\n";
    out << "[data]\n"
        << "count_pairs = " << cfg.data.count_pairs << "\n"
        << "count_real = " << cfg.data.count_real << "\n"
        << "image_size = " << cfg.data.paired.image_size << "\n"
        << "t_min = " << cfg.data.paired.t_min << "\n"
        << "airlight_low = " << cfg.data.paired.airlight_low << "\n"
        << "airlight_high = " << cfg.data.paired.airlight_high << "\n"
        << "lights_min = " << cfg.data.paired.lights_min << "\n"
        << "lights_max = " << cfg.data.paired.lights_max << "\n"
        << "glow_sigma = " << cfg.data.paired.glow_sigma << "\n"
        << "glow_intensity_low = " << cfg.data.paired.glow_intensity_low << "\n"
        << "glow_intensity_high = " << cfg.data.paired.glow_intensity_high << "\n"
        << "noise_sigma = " << cfg.data.paired.noise_sigma << "\n"
        << "gamma = " << cfg.data.paired.gamma << "\n"
        << "shifted_airlight_low = " << cfg.data.shifted.airlight_low << "\n"
        << "shifted_airlight_high = " << cfg.data.shifted.airlight_high << "\n"
        << "shifted_glow_sigma = " << cfg.data.shifted.glow_sigma << "\n"
        << "shifted_glow_intensity_low = " << cfg.data.shifted.glow_intensity_low << "\n"
        << "shifted_glow_intensity_high = " << cfg.data.shifted.glow_intensity_high << "\n"
        << "shifted_noise_sigma = " << cfg.data.shifted.noise_sigma << "\n"
        << "shifted_gamma = " << cfg.data.shifted.gamma << "\n";
    return out.str();
}

// FNV-1a over the canonical text; identifies a configuration in checkpoints
inline std::uint64_t config_hash(const Config& cfg) {
    const std::string text = canonical_config_text(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace sfsnid
