#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "sfsnid/fourier.hpp"
#include "sfsnid/ops.hpp"
#include "sfsnid/rng.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

// negative-slope constant shared by every LeakyReLU in the model
constexpr real kLeakySlope = 0.1;

// ---------------------------------------------------------------------------
// parameter bundles
// ---------------------------------------------------------------------------

struct ConvParams {
    Tensor weight; // [Co,Ci,k,k]
    Tensor bias;   // [Co]

    static ConvParams init(int cin, int cout, int k, Rng& rng) {
        const real bound = 1.0 / std::sqrt(static_cast<real>(cin) * k * k);
        ConvParams p;
        p.weight = Tensor::uniform({cout, cin, k, k}, bound, rng, true);
        p.bias = Tensor::zeros({cout}, true);
        return p;
    }
    static ConvParams zeros(int cin, int cout, int k) {
        ConvParams p;
        p.weight = Tensor::zeros({cout, cin, k, k}, true);
        p.bias = Tensor::zeros({cout}, true);
        return p;
    }
    int kernel() const { return weight.dim(2); }
    Tensor apply(const Tensor& x, int stride = 1) const {
        return conv2d(x, weight, bias, stride, same_padding(kernel()));
    }
    void collect(std::vector<Tensor>& ps) const {
        ps.push_back(weight);
        ps.push_back(bias);
    }
};

struct LayerNormParams {
    Tensor gain; // [C]
    Tensor bias; // [C]

    static LayerNormParams init(int channels) {
        LayerNormParams p;
        p.gain = Tensor::full({channels}, 1.0, true);
        p.bias = Tensor::zeros({channels}, true);
        return p;
    }
    static LayerNormParams zeros(int channels) {
        LayerNormParams p;
        p.gain = Tensor::zeros({channels}, true);
        p.bias = Tensor::zeros({channels}, true);
        return p;
    }
    Tensor apply(const Tensor& x) const { return layer_norm(x, gain, bias); }
    void collect(std::vector<Tensor>& ps) const {
        ps.push_back(gain);
        ps.push_back(bias);
    }
};

// learned residual filter applied to one spectrum plane (amplitude or phase)
struct SpectrumFilterParams {
    ConvParams pre_conv;     // 1x1, C -> C
    ConvParams squeeze_conv; // 1x1 on pooled vector
    ConvParams excite_conv;  // 1x1 on pooled vector
    ConvParams post_conv;    // 1x1, C -> C

    static SpectrumFilterParams init(int channels, Rng& rng) {
        SpectrumFilterParams p;
        p.pre_conv = ConvParams::init(channels, channels, 1, rng);
        p.squeeze_conv = ConvParams::init(channels, channels, 1, rng);
        p.excite_conv = ConvParams::init(channels, channels, 1, rng);
        p.post_conv = ConvParams::init(channels, channels, 1, rng);
        return p;
    }
    static SpectrumFilterParams zeros(int channels) {
        SpectrumFilterParams p;
        p.pre_conv = ConvParams::zeros(channels, channels, 1);
        p.squeeze_conv = ConvParams::zeros(channels, channels, 1);
        p.excite_conv = ConvParams::zeros(channels, channels, 1);
        p.post_conv = ConvParams::zeros(channels, channels, 1);
        return p;
    }
    void collect(std::vector<Tensor>& ps) const {
        pre_conv.collect(ps);
        squeeze_conv.collect(ps);
        excite_conv.collect(ps);
        post_conv.collect(ps);
    }
};

struct FSDAParams {
    SpectrumFilterParams amplitude_filter;
    SpectrumFilterParams phase_filter;

    static FSDAParams init(int channels, Rng& rng) {
        return {SpectrumFilterParams::init(channels, rng), SpectrumFilterParams::init(channels, rng)};
    }
    static FSDAParams zeros(int channels) {
        return {SpectrumFilterParams::zeros(channels), SpectrumFilterParams::zeros(channels)};
    }
    void collect(std::vector<Tensor>& ps) const {
        amplitude_filter.collect(ps);
        phase_filter.collect(ps);
    }
};

struct FDPParams {
    LayerNormParams norm;
    FSDAParams query;
    FSDAParams key;
    FSDAParams value;

    static FDPParams init(int channels, Rng& rng) {
        FDPParams p;
        p.norm = LayerNormParams::init(channels);
        p.query = FSDAParams::init(channels, rng);
        p.key = FSDAParams::init(channels, rng);
        p.value = FSDAParams::init(channels, rng);
        return p;
    }
    static FDPParams zeros(int channels) {
        FDPParams p;
        p.norm = LayerNormParams::zeros(channels);
        p.query = FSDAParams::zeros(channels);
        p.key = FSDAParams::zeros(channels);
        p.value = FSDAParams::zeros(channels);
        return p;
    }
    void collect(std::vector<Tensor>& ps) const {
        norm.collect(ps);
        query.collect(ps);
        key.collect(ps);
        value.collect(ps);
    }
};

// local-attention geometry plus its learnable relative position bias
struct AttentionConfig {
    int window = 8;
    int dim_d = 0;        // 0 -> use the channel count
    Tensor position_bias; // [(2*window-1)^2], shared across windows

    static AttentionConfig init(int window) {
        AttentionConfig cfg;
        cfg.window = window;
        cfg.position_bias =
            Tensor::zeros({(2 * window - 1) * (2 * window - 1)}, true);
        return cfg;
    }
};

struct BLPParams {
    FDPParams fdp;
    AttentionConfig attn;

    static BLPParams init(int channels, int window, Rng& rng) {
        BLPParams p;
        p.fdp = FDPParams::init(channels, rng);
        p.attn = AttentionConfig::init(window);
        return p;
    }
    static BLPParams zeros(int channels, int window) {
        BLPParams p;
        p.fdp = FDPParams::zeros(channels);
        p.attn = AttentionConfig::init(window);
        return p;
    }
    void collect(std::vector<Tensor>& ps) const {
        fdp.collect(ps);
        ps.push_back(attn.position_bias);
    }
};

struct BNMParams {
    FSDAParams freq;   // frequency branch
    ConvParams conv1;  // 3x3 spatial branch
    ConvParams conv2;  // 3x3 spatial branch
    ConvParams fuse;   // 3x3, 2C -> C

    static BNMParams init(int channels, Rng& rng) {
        BNMParams p;
        p.freq = FSDAParams::init(channels, rng);
        p.conv1 = ConvParams::init(channels, channels, 3, rng);
        p.conv2 = ConvParams::init(channels, channels, 3, rng);
        p.fuse = ConvParams::init(2 * channels, channels, 3, rng);
        return p;
    }
    static BNMParams zeros(int channels) {
        BNMParams p;
        p.freq = FSDAParams::zeros(channels);
        p.conv1 = ConvParams::zeros(channels, channels, 3);
        p.conv2 = ConvParams::zeros(channels, channels, 3);
        p.fuse = ConvParams::zeros(2 * channels, channels, 3);
        return p;
    }
    void collect(std::vector<Tensor>& ps) const {
        freq.collect(ps);
        conv1.collect(ps);
        conv2.collect(ps);
        fuse.collect(ps);
    }
};

struct SFIIParams {
    BLPParams blp;
    BNMParams bnm;

    static SFIIParams init(int channels, int window, Rng& rng) {
        return {BLPParams::init(channels, window, rng), BNMParams::init(channels, rng)};
    }
    static SFIIParams zeros(int channels, int window) {
        return {BLPParams::zeros(channels, window), BNMParams::zeros(channels)};
    }
    void collect(std::vector<Tensor>& ps) const {
        blp.collect(ps);
        bnm.collect(ps);
    }
};

// ---------------------------------------------------------------------------
// forward functions
// ---------------------------------------------------------------------------

// S~ = S. + S with S* = LeakyReLU(conv(S)), W = sigmoid(conv(LeakyReLU(conv(gap(S*))))),
// S. = conv(W (x) S*)
inline Tensor spectrum_filter(const Tensor& S, const SpectrumFilterParams& p) {
    Tensor s_star = leaky_relu(p.pre_conv.apply(S), kLeakySlope);
    Tensor pooled = global_avg_pool(s_star); // [B,C,1,1]
    Tensor w = sigmoid(p.excite_conv.apply(leaky_relu(p.squeeze_conv.apply(pooled), kLeakySlope)));
    Tensor s_dot = p.post_conv.apply(scale_channels(s_star, w));
    return s_dot + S;
}

// z -> spectrum -> filtered amplitude & phase -> recomposed spectrum -> spatial
inline Tensor fsda(const Tensor& z, const FSDAParams& p) {
    ComplexSpectrum spec = dft2(z);
    AmpPhase ap = to_amp_phase(spec);
    Tensor amp_f = spectrum_filter(ap.amplitude, p.amplitude_filter);
    Tensor ph_f = spectrum_filter(ap.phase, p.phase_filter);
    // the learned amplitude filter is unconstrained in sign, so recomposition
    // skips the nonnegativity gate of from_amp_phase
    ComplexSpectrum rec = polar_recompose(amp_f, ph_f);
    return idft2(rec);
}

struct FDPOutput {
    Tensor q, k, v;
};

inline FDPOutput fdp(const Tensor& z, const FDPParams& p) {
    Tensor zl = p.norm.apply(z);
    return {fsda(zl, p.query), fsda(zl, p.key), fsda(zl, p.value)};
}

struct AttentionResult {
    Tensor output; // [B,C,H,W]
    Tensor probs;  // [num_windows, tokens, tokens]
};

namespace detail {

// destination-ordered index map [B,C,H,W] -> [N,T,C] window token layout
inline std::shared_ptr<std::vector<std::int64_t>> window_partition_map(int B, int C, int H, int W,
                                                                       int win) {
    const int nh = H / win, nw = W / win;
    const int T = win * win;
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(B) * C * H * W);
    for (int b = 0; b < B; ++b)
        for (int wh = 0; wh < nh; ++wh)
            for (int ww = 0; ww < nw; ++ww)
                for (int t = 0; t < T; ++t) {
                    const int h = wh * win + t / win;
                    const int w = ww * win + t % win;
                    for (int c = 0; c < C; ++c)
                        idx->push_back(((static_cast<std::int64_t>(b) * C + c) * H + h) * W + w);
                }
    return idx;
}

// inverse of window_partition_map: [N,T,C] -> [B,C,H,W]
inline std::shared_ptr<std::vector<std::int64_t>> window_merge_map(int B, int C, int H, int W,
                                                                   int win) {
    const int nw = W / win;
    const int T = win * win;
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(B) * C * H * W);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const std::int64_t n =
                        (static_cast<std::int64_t>(b) * (H / win) + h / win) * nw + w / win;
                    const int t = (h % win) * win + (w % win);
                    idx->push_back((n * T + t) * C + c);
                }
    return idx;
}

// relative-position lookup indices for one window, tiled across N windows
inline std::shared_ptr<std::vector<std::int64_t>> relative_bias_map(int num_windows, int win) {
    const int T = win * win;
    const int span = 2 * win - 1;
    std::vector<std::int64_t> one(static_cast<std::size_t>(T) * T);
    for (int t1 = 0; t1 < T; ++t1) {
        const int i1 = t1 / win, j1 = t1 % win;
        for (int t2 = 0; t2 < T; ++t2) {
            const int i2 = t2 / win, j2 = t2 % win;
            one[static_cast<std::size_t>(t1) * T + t2] =
                static_cast<std::int64_t>(i2 - i1 + win - 1) * span + (j2 - j1 + win - 1);
        }
    }
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(num_windows) * one.size());
    for (int n = 0; n < num_windows; ++n) idx->insert(idx->end(), one.begin(), one.end());
    return idx;
}

} // namespace detail

// softmax(Q K^T / sqrt(d) + B) V inside non-overlapping win x win windows
inline AttentionResult window_attention_full(const Tensor& q, const Tensor& k, const Tensor& v,
                                             const AttentionConfig& cfg) {
    detail::require_rank4(q, "window_attention");
    detail::require_same_shape(q, k, "window_attention");
    detail::require_same_shape(q, v, "window_attention");
    const int B = q.dim(0), C = q.dim(1), H = q.dim(2), W = q.dim(3);
    const int win = cfg.window;
    require(win > 0 && H % win == 0 && W % win == 0,
            "window_attention: spatial dims " + shape_str(q.shape()) +
                " not divisible by window " + std::to_string(win));
    const int T = win * win;
    const int N = B * (H / win) * (W / win);
    const int d = cfg.dim_d > 0 ? cfg.dim_d : C;
    const int span = 2 * win - 1;
    require(cfg.position_bias.defined() && cfg.position_bias.rank() == 1 &&
                cfg.position_bias.dim(0) == span * span,
            "window_attention: position bias table must have (2*window-1)^2 entries");

    auto part = detail::window_partition_map(B, C, H, W, win);
    Tensor qw = gather(q, part, {N, T, C});
    Tensor kw = gather(k, part, {N, T, C});
    Tensor vw = gather(v, part, {N, T, C});

    Tensor scores = scale(matmul_nt(qw, kw), 1.0 / std::sqrt(static_cast<real>(d)));
    Tensor bias = gather(cfg.position_bias, detail::relative_bias_map(N, win), {N, T, T});
    Tensor probs = softmax(scores + bias, 2);
    Tensor out_w = matmul(probs, vw); // [N,T,C]
    Tensor out = gather(out_w, detail::window_merge_map(B, C, H, W, win), {B, C, H, W});
    return {out, probs};
}

inline Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const AttentionConfig& cfg) {
    return window_attention_full(q, k, v, cfg).output;
}

// z* = window_attention(fdp(z)) + z; dims not divisible by the window are
// reflect-padded right before attention and cropped before the residual add.
// Padding is applied to the projections rather than to the fdp input: the
// mirror symmetry of a reflect-padded plane puts many of its spectrum bins
// exactly on the atan2 branch cut, where the phase is not differentiable.
inline Tensor blp(const Tensor& z, const BLPParams& p) {
    const int H = z.dim(2), W = z.dim(3);
    FDPOutput proj = fdp(z, p.fdp);
    const int win = p.attn.window;
    const int pad_h = (win - H % win) % win;
    const int pad_w = (win - W % win) % win;
    Tensor attn = window_attention(pad_reflect(proj.q, 0, pad_h, 0, pad_w),
                                   pad_reflect(proj.k, 0, pad_h, 0, pad_w),
                                   pad_reflect(proj.v, 0, pad_h, 0, pad_w), p.attn);
    Tensor cropped = crop(attn, 0, 0, H, W);
    return cropped + z;
}

// z~ = conv(concat(FSDA(z*), conv(LeakyReLU(conv(z*))) + z*)) + z*
inline Tensor bnm(const Tensor& z_star, const BNMParams& p) {
    Tensor z_fn = fsda(z_star, p.freq);
    Tensor z_sn = p.conv2.apply(leaky_relu(p.conv1.apply(z_star), kLeakySlope));
    Tensor fused = p.fuse.apply(concat_channels({z_fn, z_sn + z_star}));
    return fused + z_star;
}

inline Tensor sfii_block(const Tensor& z, const SFIIParams& p) { return bnm(blp(z, p.blp), p.bnm); }

} // namespace sfsnid
