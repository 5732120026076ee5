#pragma once

#include <string>
#include <vector>

#include "sfsnid/ops.hpp"
#include "sfsnid/sfii.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

struct NetworkConfig {
    int base_channels = 24;
    int sfii_blocks_per_stage = 2;
    int window = 8;
    static constexpr int scales = 3; // pyramid levels, fixed

    void validate() const {
        require(base_channels >= 4, "NetworkConfig: base_channels must be >= 4");
        require(sfii_blocks_per_stage >= 1, "NetworkConfig: blocks per stage must be >= 1");
        require(window >= 1, "NetworkConfig: window must be >= 1");
    }
};

// x^0 (full), x^1 (half), x^2 (quarter); level s+1 is the 2x2 mean of level s
struct ImagePyramid {
    std::vector<Tensor> levels;
};

inline ImagePyramid build_pyramid(const Tensor& image) {
    detail::require_rank4(image, "build_pyramid");
    require(image.dim(2) % 4 == 0 && image.dim(3) % 4 == 0,
            "build_pyramid: spatial dims " + shape_str(image.shape()) +
                " must be divisible by 4; pad the image first");
    ImagePyramid pyr;
    pyr.levels.push_back(image);
    pyr.levels.push_back(downsample2x(image));
    pyr.levels.push_back(downsample2x(pyr.levels[1]));
    return pyr;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

// one encoder-decoder trunk; stage widths are C, 2C, 4C
struct ScaleParams {
    ConvParams conv_in;  // 3x3, input channels -> C
    std::vector<SFIIParams> enc0;
    ConvParams down0;    // 3x3 stride 2, C -> 2C
    std::vector<SFIIParams> enc1;
    ConvParams down1;    // 3x3 stride 2, 2C -> 4C
    std::vector<SFIIParams> bottleneck;
    ConvParams up1;      // 3x3 after nearest upsample, 4C -> 2C
    ConvParams fuse1;    // 1x1, 4C -> 2C (skip concat fusion)
    std::vector<SFIIParams> dec1;
    ConvParams up0;      // 3x3 after nearest upsample, 2C -> C
    ConvParams fuse0;    // 1x1, 2C -> C
    std::vector<SFIIParams> dec0;
    ConvParams conv_out; // 3x3, C -> 3

    static ScaleParams init(int in_channels, const NetworkConfig& cfg, Rng& rng) {
        const int C = cfg.base_channels;
        const int k = cfg.sfii_blocks_per_stage;
        ScaleParams p;
        p.conv_in = ConvParams::init(in_channels, C, 3, rng);
        for (int i = 0; i < k; ++i) p.enc0.push_back(SFIIParams::init(C, cfg.window, rng));
        p.down0 = ConvParams::init(C, 2 * C, 3, rng);
        for (int i = 0; i < k; ++i) p.enc1.push_back(SFIIParams::init(2 * C, cfg.window, rng));
        p.down1 = ConvParams::init(2 * C, 4 * C, 3, rng);
        for (int i = 0; i < k; ++i) p.bottleneck.push_back(SFIIParams::init(4 * C, cfg.window, rng));
        p.up1 = ConvParams::init(4 * C, 2 * C, 3, rng);
        p.fuse1 = ConvParams::init(4 * C, 2 * C, 1, rng);
        for (int i = 0; i < k; ++i) p.dec1.push_back(SFIIParams::init(2 * C, cfg.window, rng));
        p.up0 = ConvParams::init(2 * C, C, 3, rng);
        p.fuse0 = ConvParams::init(2 * C, C, 1, rng);
        for (int i = 0; i < k; ++i) p.dec0.push_back(SFIIParams::init(C, cfg.window, rng));
        p.conv_out = ConvParams::init(C, 3, 3, rng);
        return p;
    }

    void collect(std::vector<Tensor>& ps) const {
        conv_in.collect(ps);
        for (const auto& b : enc0) b.collect(ps);
        down0.collect(ps);
        for (const auto& b : enc1) b.collect(ps);
        down1.collect(ps);
        for (const auto& b : bottleneck) b.collect(ps);
        up1.collect(ps);
        fuse1.collect(ps);
        for (const auto& b : dec1) b.collect(ps);
        up0.collect(ps);
        fuse0.collect(ps);
        for (const auto& b : dec0) b.collect(ps);
        conv_out.collect(ps);
    }
};

struct NetworkParams {
    std::vector<ScaleParams> scales; // index s = 0 (fine) .. 2 (coarse)

    // coarse scale sees the 3-channel input; finer scales additionally take
    // the upsampled coarser prediction (3 more channels)
    static NetworkParams init(const NetworkConfig& cfg, Rng& rng) {
        cfg.validate();
        NetworkParams p;
        for (int s = 0; s < NetworkConfig::scales; ++s) {
            const int in_ch = (s == NetworkConfig::scales - 1) ? 3 : 6;
            p.scales.push_back(ScaleParams::init(in_ch, cfg, rng));
        }
        return p;
    }

    std::vector<Tensor> collect() const {
        std::vector<Tensor> ps;
        for (const auto& s : scales) s.collect(ps);
        return ps;
    }
};

inline std::size_t count_params(const std::vector<Tensor>& ps) {
    std::size_t n = 0;
    for (const auto& t : ps) n += t.size();
    return n;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor run_stage(Tensor x, const std::vector<SFIIParams>& blocks) {
    for (const auto& b : blocks) x = sfii_block(x, b);
    return x;
}

// one encoder-decoder trunk; input is reflect-padded so both downsampling
// levels see even dims, and the prediction is cropped back at the end
inline Tensor run_scale(const Tensor& input, const ScaleParams& p) {
    const int H = input.dim(2), W = input.dim(3);
    Tensor x = pad_to_multiple(input, 4);

    Tensor f0 = run_stage(leaky_relu(p.conv_in.apply(x), kLeakySlope), p.enc0);
    Tensor f1 = run_stage(leaky_relu(p.down0.apply(f0, 2), kLeakySlope), p.enc1);
    Tensor fb = run_stage(leaky_relu(p.down1.apply(f1, 2), kLeakySlope), p.bottleneck);

    Tensor d1 = leaky_relu(p.up1.apply(upsample2x(fb)), kLeakySlope);
    d1 = run_stage(leaky_relu(p.fuse1.apply(concat_channels({d1, f1})), kLeakySlope), p.dec1);
    Tensor d0 = leaky_relu(p.up0.apply(upsample2x(d1)), kLeakySlope);
    d0 = run_stage(leaky_relu(p.fuse0.apply(concat_channels({d0, f0})), kLeakySlope), p.dec0);

    Tensor out = p.conv_out.apply(d0);
    return crop(out, 0, 0, H, W);
}

} // namespace detail

// returns [p^0, p^1, p^2]; scales are evaluated coarse to fine, each finer
// scale conditioning on the upsampled coarser prediction
inline std::vector<Tensor> forward(const ImagePyramid& pyr, const NetworkParams& params,
                                   const NetworkConfig& cfg) {
    cfg.validate();
    require(pyr.levels.size() == NetworkConfig::scales,
            "forward: pyramid must have " + std::to_string(NetworkConfig::scales) + " levels");
    require(params.scales.size() == NetworkConfig::scales,
            "forward: params must cover " + std::to_string(NetworkConfig::scales) + " scales");
    std::vector<Tensor> preds(NetworkConfig::scales);
    for (int s = NetworkConfig::scales - 1; s >= 0; --s) {
        Tensor input = pyr.levels[s];
        require(input.dim(1) == 3, "forward: pyramid level must have 3 channels, got " +
                                       shape_str(input.shape()));
        if (s < NetworkConfig::scales - 1) {
            input = concat_channels({input, upsample2x(preds[s + 1])});
        }
        preds[s] = detail::run_scale(input, params.scales[s]);
    }
    return preds;
}

} // namespace sfsnid
