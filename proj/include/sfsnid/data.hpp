#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sfsnid/image.hpp"
#include "sfsnid/rng.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

// ---------------------------------------------------------------------------
// scene model
// ---------------------------------------------------------------------------

struct Light {
    real y = 0, x = 0;                  // continuous pixel position
    std::array<real, 3> color{1, 1, 1}; // per-channel tint in [0,1]
    real intensity = 0.5;
};

struct SynthScene {
    Tensor clear;        // J: [3,H,W] radiance in [0,1]
    Tensor transmission; // t: [H,W] in (0,1]
    Tensor airlight;     // A: [3] constant color or [3,H,W] field, in [0,1]
    std::vector<Light> lights;
    real glow_sigma = 6.0;  // Gaussian spread of the glow halo, pixels
    real noise_sigma = 0.0; // additive Gaussian noise std

    int height() const { return clear.dim(1); }
    int width() const { return clear.dim(2); }

    void validate() const {
        require(clear.shape().size() == 3 && clear.dim(0) == 3,
                "SynthScene: clear must be [3,H,W], got " + shape_str(clear.shape()));
        require(transmission.shape() == std::vector<int>{height(), width()},
                "SynthScene: transmission must be [H,W]");
        const bool const_airlight = transmission.defined() && airlight.shape() == std::vector<int>{3};
        require(const_airlight || airlight.shape() == clear.shape(),
                "SynthScene: airlight must be [3] or [3,H,W]");
        for (real v : clear.values())
            require(v >= 0.0 && v <= 1.0, "SynthScene: clear values outside [0,1]");
        for (real v : transmission.values())
            require(v > 0.0 && v <= 1.0, "SynthScene: transmission outside (0,1]");
        for (real v : airlight.values())
            require(v >= 0.0 && v <= 1.0, "SynthScene: airlight outside [0,1]");
        for (const Light& l : lights) {
            require(l.intensity >= 0.0, "SynthScene: negative light intensity");
            for (real c : l.color) require(c >= 0.0 && c <= 1.0, "SynthScene: light color outside [0,1]");
        }
        require(glow_sigma > 0.0, "SynthScene: glow_sigma must be > 0");
        require(noise_sigma >= 0.0, "SynthScene: noise_sigma must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// imaging models
// ---------------------------------------------------------------------------

namespace detail {

inline real airlight_at(const Tensor& A, int c, int h, int w, int H, int W) {
    if (A.shape().size() == 1) return A.values()[c];
    return A.values()[(static_cast<std::size_t>(c) * H + h) * W + w];
}

} // namespace detail

// daytime scattering composite: I = J*t + A*(1-t), clamped to [0,1]
inline Tensor synth_daytime(const Tensor& J, const Tensor& t, const Tensor& A) {
    require(J.shape().size() == 3 && J.dim(0) == 3,
            "synth_daytime: J must be [3,H,W], got " + shape_str(J.shape()));
    const int H = J.dim(1), W = J.dim(2);
    require(t.shape() == std::vector<int>{H, W}, "synth_daytime: t must be [H,W]");
    require(A.shape() == std::vector<int>{3} || A.shape() == J.shape(),
            "synth_daytime: A must be [3] or [3,H,W]");
    std::vector<real> out(J.size());
    const real* pj = J.data();
    const real* pt = t.data();
    for (int c = 0; c < 3; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const std::size_t i = (static_cast<std::size_t>(c) * H + h) * W + w;
                const real tv = pt[static_cast<std::size_t>(h) * W + w];
                const real av = detail::airlight_at(A, c, h, w, H, W);
                out[i] = std::clamp(pj[i] * tv + av * (1.0 - tv), real(0), real(1));
            }
    return Tensor::from(J.shape(), std::move(out));
}

// glow field: each light contributes intensity * color * exp(-d^2 / (2 sigma^2)),
// i.e. an unnormalized Gaussian with its peak (= intensity * color) at the light
inline Tensor glow_field(const std::vector<Light>& lights, real sigma, int H, int W) {
    require(sigma > 0.0, "glow_field: sigma must be > 0");
    std::vector<real> g(static_cast<std::size_t>(3) * H * W, 0.0);
    const real inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (const Light& l : lights)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const real dy = h - l.y, dx = w - l.x;
                const real k = l.intensity * std::exp(-(dy * dy + dx * dx) * inv2s2);
                for (int c = 0; c < 3; ++c)
                    g[(static_cast<std::size_t>(c) * H + h) * W + w] += k * l.color[c];
            }
    return Tensor::from({3, H, W}, std::move(g));
}

// nighttime composite: I = J*t + A*(1-t) + glow + noise, clamped to [0,1];
// returns (hazy, clear); deterministic per seed
inline std::pair<Tensor, Tensor> synth_nighttime(const SynthScene& scene, std::uint64_t seed) {
    scene.validate();
    const int H = scene.height(), W = scene.width();
    Tensor base = synth_daytime(scene.clear, scene.transmission, scene.airlight);
    Tensor glow = glow_field(scene.lights, scene.glow_sigma, H, W);
    Rng rng(seed);
    std::vector<real> out(base.size());
    const real* pb = base.data();
    const real* pg = glow.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        real v = pb[i] + pg[i];
        if (scene.noise_sigma > 0.0) v += rng.normal(0.0, scene.noise_sigma);
        out[i] = std::clamp(v, real(0), real(1));
    }
    return {Tensor::from({3, H, W}, std::move(out)), scene.clear};
}

// per-channel power law: out = in^gamma (inputs clamped to [0,1] first)
inline Tensor gamma_correct(const Tensor& img, real gamma) {
    require(gamma > 0.0, "gamma_correct: gamma must be > 0");
    std::vector<real> out(img.size());
    const real* p = img.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::pow(std::clamp(p[i], real(0), real(1)), gamma);
    return Tensor::from(img.shape(), std::move(out));
}

// ---------------------------------------------------------------------------
// random scene synthesis
// ---------------------------------------------------------------------------

// smooth random field in [0,1]: value noise, 2 octaves of bilinear lattice interpolation
inline std::vector<real> value_noise(int H, int W, int base_cells, int octaves, Rng& rng) {
    require(H >= 1 && W >= 1 && base_cells >= 1 && octaves >= 1, "value_noise: bad arguments");
    std::vector<real> field(static_cast<std::size_t>(H) * W, 0.0);
    real amplitude = 1.0, total_amp = 0.0;
    for (int o = 0; o < octaves; ++o) {
        const int cells = base_cells << o;
        const int n = cells + 1;
        std::vector<real> lattice(static_cast<std::size_t>(n) * n);
        for (real& v : lattice) v = rng.uniform(0.0, 1.0);
        for (int h = 0; h < H; ++h) {
            const real fy = H == 1 ? 0.0 : static_cast<real>(h) / (H - 1) * cells;
            const int y0 = std::min(static_cast<int>(fy), cells - 1);
            const real ty = fy - y0;
            for (int w = 0; w < W; ++w) {
                const real fx = W == 1 ? 0.0 : static_cast<real>(w) / (W - 1) * cells;
                const int x0 = std::min(static_cast<int>(fx), cells - 1);
                const real tx = fx - x0;
                const real v00 = lattice[static_cast<std::size_t>(y0) * n + x0];
                const real v01 = lattice[static_cast<std::size_t>(y0) * n + x0 + 1];
                const real v10 = lattice[static_cast<std::size_t>(y0 + 1) * n + x0];
                const real v11 = lattice[static_cast<std::size_t>(y0 + 1) * n + x0 + 1];
                const real v = (v00 * (1 - tx) + v01 * tx) * (1 - ty) +
                               (v10 * (1 - tx) + v11 * tx) * ty;
                field[static_cast<std::size_t>(h) * W + w] += amplitude * v;
            }
        }
        total_amp += amplitude;
        amplitude *= 0.5;
    }
    for (real& v : field) v /= total_amp;
    return field;
}

// knobs for one split's scene distribution
struct SceneConfig {
    int image_size = 64;
    real t_min = 0.35;           // transmission field lower bound
    real airlight_low = 0.55;    // constant airlight color range
    real airlight_high = 0.85;
    int lights_min = 1;
    int lights_max = 3;
    real glow_sigma = 6.0;
    real glow_intensity_low = 0.3;
    real glow_intensity_high = 0.8;
    real noise_sigma = 0.01;
    real gamma = 2.2; // nighttime darkening applied to the clear radiance

    void validate() const {
        require(image_size >= 8, "SceneConfig: image_size must be >= 8");
        require(t_min > 0.0 && t_min <= 1.0, "SceneConfig: t_min must be in (0,1]");
        require(airlight_low >= 0.0 && airlight_high <= 1.0 && airlight_low <= airlight_high,
                "SceneConfig: airlight range invalid");
        require(lights_min >= 0 && lights_max >= lights_min, "SceneConfig: light count range invalid");
        require(glow_sigma > 0.0, "SceneConfig: glow_sigma must be > 0");
        require(glow_intensity_low >= 0.0 && glow_intensity_high >= glow_intensity_low,
                "SceneConfig: glow intensity range invalid");
        require(noise_sigma >= 0.0, "SceneConfig: noise_sigma must be >= 0");
        require(gamma > 0.0, "SceneConfig: gamma must be > 0");
    }
};

// draw a full scene from the config's distribution; the clear radiance is
// gamma-darkened to a nighttime level before compositing
inline SynthScene random_scene(const SceneConfig& cfg, Rng& rng) {
    cfg.validate();
    const int H = cfg.image_size, W = cfg.image_size;
    // radiance: shared luminance structure plus per-channel variation
    std::vector<real> lum = value_noise(H, W, 4, 2, rng);
    std::vector<real> j(static_cast<std::size_t>(3) * H * W);
    for (int c = 0; c < 3; ++c) {
        std::vector<real> chroma = value_noise(H, W, 8, 2, rng);
        for (std::size_t i = 0; i < lum.size(); ++i)
            j[static_cast<std::size_t>(c) * lum.size() + i] =
                std::clamp(0.1 + 0.8 * (0.65 * lum[i] + 0.35 * chroma[i]), real(0), real(1));
    }
    SynthScene scene;
    scene.clear = gamma_correct(Tensor::from({3, H, W}, std::move(j)), cfg.gamma);
    std::vector<real> t = value_noise(H, W, 4, 2, rng);
    for (real& v : t) v = cfg.t_min + (1.0 - cfg.t_min) * v;
    scene.transmission = Tensor::from({H, W}, std::move(t));
    scene.airlight = Tensor::from(
        {3}, {rng.uniform(cfg.airlight_low, cfg.airlight_high),
              rng.uniform(cfg.airlight_low, cfg.airlight_high),
              rng.uniform(cfg.airlight_low, cfg.airlight_high)});
    const int n_lights = rng.uniform_int(cfg.lights_min, cfg.lights_max);
    for (int i = 0; i < n_lights; ++i) {
        Light l;
        l.y = rng.uniform(0.0, H - 1.0);
        l.x = rng.uniform(0.0, W - 1.0);
        l.color = {rng.uniform(0.7, 1.0), rng.uniform(0.55, 0.95), rng.uniform(0.35, 0.85)};
        l.intensity = rng.uniform(cfg.glow_intensity_low, cfg.glow_intensity_high);
        scene.lights.push_back(l);
    }
    scene.glow_sigma = cfg.glow_sigma;
    scene.noise_sigma = cfg.noise_sigma;
    return scene;
}

// ---------------------------------------------------------------------------
// dataset manifest
// ---------------------------------------------------------------------------

struct DatasetManifest {
    std::string base_dir; // directory the relative paths resolve against
    std::vector<std::pair<std::string, std::string>> synthetic_pairs; // (hazy, clear)
    std::vector<std::string> real_hazy;
    std::vector<std::string> real_clear_reference; // optional
    std::vector<std::string> pseudo_labels;        // optional, aligns 1:1 with real_hazy

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(base_dir) / rel).string();
    }

    void validate() const {
        require(pseudo_labels.empty() || pseudo_labels.size() == real_hazy.size(),
                "DatasetManifest: pseudo_labels must align 1:1 with real_hazy");
        require(real_clear_reference.empty() || real_clear_reference.size() == real_hazy.size(),
                "DatasetManifest: real_clear_reference must align 1:1 with real_hazy");
    }
};

constexpr const char* kManifestMagic = "sfsnid-manifest v1";

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    m.validate();
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "save_manifest: cannot open " + path + " for writing");
    out << kManifestMagic << "\n";
    out << "synthetic_pairs " << m.synthetic_pairs.size() << "\n";
    for (const auto& [hazy, clear] : m.synthetic_pairs) out << hazy << " " << clear << "\n";
    out << "real_hazy " << m.real_hazy.size() << "\n";
    for (const auto& p : m.real_hazy) out << p << "\n";
    if (!m.real_clear_reference.empty()) {
        out << "real_clear_reference " << m.real_clear_reference.size() << "\n";
        for (const auto& p : m.real_clear_reference) out << p << "\n";
    }
    if (!m.pseudo_labels.empty()) {
        out << "pseudo_labels " << m.pseudo_labels.size() << "\n";
        for (const auto& p : m.pseudo_labels) out << p << "\n";
    }
    require(out.good(), "save_manifest: write failed for " + path);
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_manifest: cannot open " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    if (m.base_dir.empty()) m.base_dir = ".";
    std::string line;
    require(std::getline(in, line) && line == kManifestMagic,
            "load_manifest: bad magic line in " + path);
    auto read_count = [&](std::istringstream& header) {
        std::size_t n = 0;
        require(static_cast<bool>(header >> n), "load_manifest: missing section count in " + path);
        return n;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream header(line);
        std::string section;
        header >> section;
        const std::size_t n = read_count(header);
        for (std::size_t i = 0; i < n; ++i) {
            require(std::getline(in, line) && !line.empty(),
                    "load_manifest: truncated section " + section + " in " + path);
            std::istringstream row(line);
            if (section == "synthetic_pairs") {
                std::string hazy, clear;
                require(static_cast<bool>(row >> hazy >> clear),
                        "load_manifest: malformed pair row in " + path);
                m.synthetic_pairs.emplace_back(hazy, clear);
            } else if (section == "real_hazy") {
                m.real_hazy.push_back(line);
            } else if (section == "real_clear_reference") {
                m.real_clear_reference.push_back(line);
            } else if (section == "pseudo_labels") {
                m.pseudo_labels.push_back(line);
            } else {
                fail("load_manifest: unknown section '" + section + "' in " + path);
            }
        }
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// dataset generation
// ---------------------------------------------------------------------------

struct DataConfig {
    int count_pairs = 4; // N: synthetic (hazy, clear) pairs
    int count_real = 2;  // M: unlabeled hazy images from the shifted distribution
    SceneConfig paired;
    SceneConfig shifted; // distribution gap for the "real-like" split

    DataConfig() {
        shifted.airlight_low = 0.75;
        shifted.airlight_high = 0.95;
        shifted.glow_sigma = 9.0;
        shifted.glow_intensity_low = 0.5;
        shifted.glow_intensity_high = 1.0;
        shifted.noise_sigma = 0.02;
        shifted.gamma = 2.6;
    }

    void validate() const {
        require(count_pairs >= 0 && count_real >= 0, "DataConfig: negative counts");
        paired.validate();
        shifted.validate();
    }
};

// writes N synthetic pairs plus M shifted "real-like" hazy images and the
// manifest; deterministic per seed (per-scene derived seeds)
inline DatasetManifest generate_dataset(const DataConfig& cfg, std::uint64_t seed,
                                        const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "synthetic");
    fs::create_directories(fs::path(out_dir) / "real");
    Rng root(seed);
    DatasetManifest m;
    m.base_dir = out_dir;
    char name[64];
    for (int i = 0; i < cfg.count_pairs; ++i) {
        Rng scene_rng = root.derive(static_cast<std::uint64_t>(i));
        SynthScene scene = random_scene(cfg.paired, scene_rng);
        auto [hazy, clear] = synth_nighttime(scene, scene_rng.derive(0xA11CE).next_u64());
        std::snprintf(name, sizeof name, "synthetic/hazy_%04d.png", i);
        std::string hazy_rel = name;
        std::snprintf(name, sizeof name, "synthetic/clear_%04d.png", i);
        std::string clear_rel = name;
        save_image(hazy, m.resolve(hazy_rel));
        save_image(clear, m.resolve(clear_rel));
        m.synthetic_pairs.emplace_back(hazy_rel, clear_rel);
    }
    for (int i = 0; i < cfg.count_real; ++i) {
        Rng scene_rng = root.derive(0x5EED0000ULL + static_cast<std::uint64_t>(i));
        SynthScene scene = random_scene(cfg.shifted, scene_rng);
        auto [hazy, clear] = synth_nighttime(scene, scene_rng.derive(0xA11CE).next_u64());
        (void)clear;
        std::snprintf(name, sizeof name, "real/hazy_%04d.png", i);
        std::string rel = name;
        save_image(hazy, m.resolve(rel));
        m.real_hazy.push_back(rel);
    }
    save_manifest(m, (fs::path(out_dir) / "manifest.txt").string());
    return m;
}

} // namespace sfsnid
