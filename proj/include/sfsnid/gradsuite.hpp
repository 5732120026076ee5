#pragma once

#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sfsnid/fourier.hpp"
#include "sfsnid/gradcheck.hpp"
#include "sfsnid/network.hpp"
#include "sfsnid/objectives.hpp"
#include "sfsnid/ops.hpp"
#include "sfsnid/rng.hpp"
#include "sfsnid/sfii.hpp"

namespace sfsnid {

// ---------------------------------------------------------------------------
// Finite-difference verification of every differentiable operation, the
// composite blocks built from them, and the full network objective.
//
// Three tiers share one harness but differ in step size and comparison:
//   * ops        — per-coordinate, h=1e-3, threshold 1e-4 (smooth fixtures,
//                  entries checked exhaustively)
//   * composites — per-input group norm, h=1e-4, threshold 1e-3 (an
//                  elementwise quotient would be dominated by coordinates
//                  whose finite difference straddles an activation kink)
//   * end-to-end — one globally sampled group, h=1e-5, threshold 1e-3
//                  (the smaller step keeps every probe well inside the
//                  smooth neighbourhood of the spectrum phase)
// Fixture seeds are pinned: fixtures are random but frozen, never fresh.
// ---------------------------------------------------------------------------

namespace detail {

inline GradCheckOptions op_opts(std::uint64_t seed) {
    GradCheckOptions o;
    o.h = 1e-3;
    o.threshold = 1e-4;
    o.compare = FdCompare::per_coordinate;
    o.seed = seed;
    return o;
}

inline GradCheckOptions composite_opts(std::uint64_t seed) {
    GradCheckOptions o;
    o.h = 1e-4;
    o.threshold = 1e-3;
    o.compare = FdCompare::group_norm;
    o.seed = seed;
    return o;
}

inline GradCheckOptions end_to_end_opts(std::uint64_t seed) {
    GradCheckOptions o;
    o.h = 1e-5;
    o.threshold = 1e-3;
    o.compare = FdCompare::group_norm;
    o.global_budget = 160;
    o.seed = seed;
    return o;
}

inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, real lo, real hi, bool grad = true) {
    std::vector<real> v(numel(shape));
    for (real& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// magnitudes in [min_mag, max_mag] with random signs: keeps every coordinate
// a safe distance from the kink of abs/leaky_relu and from the spectral origin
inline Tensor signed_rand_tensor(std::vector<int> shape, Rng& rng, real min_mag, real max_mag,
                                 bool grad = true) {
    std::vector<real> v(numel(shape));
    for (real& x : v) x = (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(min_mag, max_mag);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// [1,C,H,W] noise on a per-channel offset ramp. Feature maps probed through a
// layer norm need per-pixel channel variance bounded below: with iid channels
// two can nearly coincide, the normalizer's variance collapses toward eps and
// its curvature there swamps a finite-difference probe.
inline Tensor channel_ramp_tensor(int channels, int h, int w, Rng& rng, bool grad = true) {
    std::vector<int> shape{1, channels, h, w};
    std::vector<real> v(numel(shape));
    std::size_t at = 0;
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < h * w; ++i, ++at) v[at] = static_cast<real>(c) + rng.uniform(-0.4, 0.4);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// fixed random projection: sum(x * w) weights every output coordinate
// differently, so a misrouted gradient cannot cancel out of the scalar
inline Tensor weighted(const Tensor& x, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(x, rand_tensor(x.shape(), rng, -1.0, 1.0, false)));
}

} // namespace detail

struct GradSuiteEntry {
    std::string name;
    std::function<GradCheckReport()> run;
};

inline const std::vector<GradSuiteEntry>& gradient_suite() {
    using detail::op_opts;
    using detail::composite_opts;
    using detail::end_to_end_opts;
    using detail::rand_tensor;
    using detail::signed_rand_tensor;
    using detail::weighted;

    static const std::vector<GradSuiteEntry> entries = [] {
        std::vector<GradSuiteEntry> e;
        auto op = [&](std::string name, std::uint64_t seed,
                      std::function<GradCheckReport(GradCheckOptions)> fn) {
            e.push_back({name, [fn = std::move(fn), seed] { return fn(op_opts(seed)); }});
        };

        // --- elementwise ---
        op("add", 1, [](GradCheckOptions o) {
            Rng rng(101);
            Tensor a = rand_tensor({2, 3, 5}, rng, -1, 1), b = rand_tensor({2, 3, 5}, rng, -1, 1);
            return check_gradients("add", [](const std::vector<Tensor>& in) {
                return weighted(add(in[0], in[1]), 11); }, {a, b}, o);
        });
        op("sub", 2, [](GradCheckOptions o) {
            Rng rng(102);
            Tensor a = rand_tensor({2, 3, 5}, rng, -1, 1), b = rand_tensor({2, 3, 5}, rng, -1, 1);
            return check_gradients("sub", [](const std::vector<Tensor>& in) {
                return weighted(sub(in[0], in[1]), 12); }, {a, b}, o);
        });
        op("mul", 3, [](GradCheckOptions o) {
            Rng rng(103);
            Tensor a = rand_tensor({2, 3, 5}, rng, -1, 1), b = rand_tensor({2, 3, 5}, rng, -1, 1);
            return check_gradients("mul", [](const std::vector<Tensor>& in) {
                return weighted(mul(in[0], in[1]), 13); }, {a, b}, o);
        });
        op("scale", 4, [](GradCheckOptions o) {
            Rng rng(104);
            Tensor a = rand_tensor({3, 4}, rng, -1, 1);
            return check_gradients("scale", [](const std::vector<Tensor>& in) {
                return weighted(scale(in[0], -1.7), 14); }, {a}, o);
        });
        op("power", 5, [](GradCheckOptions o) {
            Rng rng(105);
            Tensor a = rand_tensor({3, 4}, rng, 0.3, 1.4);
            return check_gradients("power", [](const std::vector<Tensor>& in) {
                return weighted(power(in[0], 1.3), 15); }, {a}, o);
        });
        op("abs_val", 6, [](GradCheckOptions o) {
            Rng rng(106);
            Tensor a = signed_rand_tensor({3, 5}, rng, 0.2, 1.2);
            return check_gradients("abs_val", [](const std::vector<Tensor>& in) {
                return weighted(abs_val(in[0]), 16); }, {a}, o);
        });
        op("leaky_relu", 7, [](GradCheckOptions o) {
            Rng rng(107);
            Tensor a = signed_rand_tensor({3, 5}, rng, 0.2, 1.2);
            return check_gradients("leaky_relu", [](const std::vector<Tensor>& in) {
                return weighted(leaky_relu(in[0], 0.1), 17); }, {a}, o);
        });
        op("sigmoid", 8, [](GradCheckOptions o) {
            Rng rng(108);
            Tensor a = rand_tensor({3, 5}, rng, -2, 2);
            return check_gradients("sigmoid", [](const std::vector<Tensor>& in) {
                return weighted(sigmoid(in[0]), 18); }, {a}, o);
        });
        op("softmax", 9, [](GradCheckOptions o) {
            Rng rng(109);
            Tensor a = rand_tensor({2, 4, 6}, rng, -2, 2);
            return check_gradients("softmax", [](const std::vector<Tensor>& in) {
                return weighted(softmax(in[0], -1), 19); }, {a}, o);
        });

        // --- reductions ---
        op("sum", 10, [](GradCheckOptions o) {
            Rng rng(110);
            Tensor a = rand_tensor({4, 5}, rng, -1, 1);
            return check_gradients("sum", [](const std::vector<Tensor>& in) {
                return sum(mul(in[0], in[0])); }, {a}, o);
        });
        op("mean", 11, [](GradCheckOptions o) {
            Rng rng(111);
            Tensor a = rand_tensor({4, 5}, rng, -1, 1);
            return check_gradients("mean", [](const std::vector<Tensor>& in) {
                return mean(mul(in[0], in[0])); }, {a}, o);
        });
        op("mean_channels", 12, [](GradCheckOptions o) {
            Rng rng(112);
            Tensor a = rand_tensor({1, 3, 4, 4}, rng, -1, 1);
            return check_gradients("mean_channels", [](const std::vector<Tensor>& in) {
                return weighted(mean_channels(in[0]), 22); }, {a}, o);
        });

        // --- structure ---
        op("concat_channels", 13, [](GradCheckOptions o) {
            Rng rng(113);
            Tensor a = rand_tensor({1, 2, 3, 3}, rng, -1, 1), b = rand_tensor({1, 3, 3, 3}, rng, -1, 1);
            return check_gradients("concat_channels", [](const std::vector<Tensor>& in) {
                return weighted(concat_channels({in[0], in[1]}), 23); }, {a, b}, o);
        });
        op("gather", 14, [](GradCheckOptions o) {
            Rng rng(114);
            Tensor a = rand_tensor({2, 3, 4}, rng, -1, 1);
            // repeats exercise gradient accumulation into one source slot
            auto idx = std::make_shared<const std::vector<std::int64_t>>(
                std::vector<std::int64_t>{0, 5, 5, 23, 7, 11, 2, 2, 19, 13});
            return check_gradients("gather", [idx](const std::vector<Tensor>& in) {
                return weighted(gather(in[0], idx, {2, 5}), 24); }, {a}, o);
        });
        op("upsample2x", 15, [](GradCheckOptions o) {
            Rng rng(115);
            Tensor a = rand_tensor({1, 2, 3, 4}, rng, -1, 1);
            return check_gradients("upsample2x", [](const std::vector<Tensor>& in) {
                return weighted(upsample2x(in[0]), 25); }, {a}, o);
        });
        op("downsample2x", 16, [](GradCheckOptions o) {
            Rng rng(116);
            Tensor a = rand_tensor({1, 2, 4, 6}, rng, -1, 1);
            return check_gradients("downsample2x", [](const std::vector<Tensor>& in) {
                return weighted(downsample2x(in[0]), 26); }, {a}, o);
        });
        op("pad_reflect", 17, [](GradCheckOptions o) {
            Rng rng(117);
            Tensor a = rand_tensor({1, 2, 4, 5}, rng, -1, 1);
            return check_gradients("pad_reflect", [](const std::vector<Tensor>& in) {
                return weighted(pad_reflect(in[0], 1, 2, 1, 0), 27); }, {a}, o);
        });
        op("pad_to_multiple", 18, [](GradCheckOptions o) {
            Rng rng(118);
            Tensor a = rand_tensor({1, 2, 5, 6}, rng, -1, 1);
            return check_gradients("pad_to_multiple", [](const std::vector<Tensor>& in) {
                return weighted(pad_to_multiple(in[0], 4), 28); }, {a}, o);
        });
        op("crop", 19, [](GradCheckOptions o) {
            Rng rng(119);
            Tensor a = rand_tensor({1, 2, 4, 5}, rng, -1, 1);
            return check_gradients("crop", [](const std::vector<Tensor>& in) {
                return weighted(crop(in[0], 1, 1, 2, 3), 29); }, {a}, o);
        });

        // --- linear algebra ---
        op("matmul", 20, [](GradCheckOptions o) {
            Rng rng(120);
            Tensor a = rand_tensor({2, 3, 4}, rng, -1, 1), b = rand_tensor({2, 4, 5}, rng, -1, 1);
            return check_gradients("matmul", [](const std::vector<Tensor>& in) {
                return weighted(matmul(in[0], in[1]), 30); }, {a, b}, o);
        });
        op("matmul_nt", 21, [](GradCheckOptions o) {
            Rng rng(121);
            Tensor a = rand_tensor({2, 3, 4}, rng, -1, 1), b = rand_tensor({2, 5, 4}, rng, -1, 1);
            return check_gradients("matmul_nt", [](const std::vector<Tensor>& in) {
                return weighted(matmul_nt(in[0], in[1]), 31); }, {a, b}, o);
        });
        op("conv2d_k1", 22, [](GradCheckOptions o) {
            Rng rng(122);
            Tensor x = rand_tensor({1, 3, 4, 4}, rng, -1, 1);
            Tensor w = rand_tensor({2, 3, 1, 1}, rng, -1, 1);
            Tensor b = rand_tensor({2}, rng, -1, 1);
            return check_gradients("conv2d_k1", [](const std::vector<Tensor>& in) {
                return weighted(conv2d(in[0], in[1], in[2], 1, 0), 32); }, {x, w, b}, o);
        });
        op("conv2d_k3", 23, [](GradCheckOptions o) {
            Rng rng(123);
            Tensor x = rand_tensor({1, 2, 5, 5}, rng, -1, 1);
            Tensor w = rand_tensor({3, 2, 3, 3}, rng, -1, 1);
            Tensor b = rand_tensor({3}, rng, -1, 1);
            return check_gradients("conv2d_k3", [](const std::vector<Tensor>& in) {
                return weighted(conv2d(in[0], in[1], in[2], 1, 1), 33); }, {x, w, b}, o);
        });
        op("conv2d_k3_s2", 24, [](GradCheckOptions o) {
            Rng rng(124);
            Tensor x = rand_tensor({1, 2, 6, 6}, rng, -1, 1);
            Tensor w = rand_tensor({3, 2, 3, 3}, rng, -1, 1);
            Tensor b = rand_tensor({3}, rng, -1, 1);
            return check_gradients("conv2d_k3_s2", [](const std::vector<Tensor>& in) {
                return weighted(conv2d(in[0], in[1], in[2], 2, 1), 34); }, {x, w, b}, o);
        });
        op("layer_norm", 25, [](GradCheckOptions o) {
            Rng rng(125);
            Tensor x = rand_tensor({1, 3, 4, 4}, rng, -1, 1);
            Tensor g = rand_tensor({3}, rng, 0.5, 1.5);
            Tensor b = rand_tensor({3}, rng, -0.5, 0.5);
            return check_gradients("layer_norm", [](const std::vector<Tensor>& in) {
                return weighted(layer_norm(in[0], in[1], in[2]), 35); }, {x, g, b}, o);
        });

        // --- pooling / channel scaling ---
        op("avg_pool", 26, [](GradCheckOptions o) {
            Rng rng(126);
            Tensor a = rand_tensor({1, 2, 4, 6}, rng, -1, 1);
            return check_gradients("avg_pool", [](const std::vector<Tensor>& in) {
                return weighted(avg_pool(in[0], 2, 2), 36); }, {a}, o);
        });
        op("global_avg_pool", 27, [](GradCheckOptions o) {
            Rng rng(127);
            Tensor a = rand_tensor({1, 3, 4, 4}, rng, -1, 1);
            return check_gradients("global_avg_pool", [](const std::vector<Tensor>& in) {
                return weighted(global_avg_pool(in[0]), 37); }, {a}, o);
        });
        op("scale_channels", 28, [](GradCheckOptions o) {
            Rng rng(128);
            Tensor x = rand_tensor({1, 3, 4, 4}, rng, -1, 1);
            Tensor w = rand_tensor({1, 3, 1, 1}, rng, -1, 1);
            return check_gradients("scale_channels", [](const std::vector<Tensor>& in) {
                return weighted(scale_channels(in[0], in[1]), 38); }, {x, w}, o);
        });

        // --- spectral ---
        op("dft2", 29, [](GradCheckOptions o) {
            Rng rng(129);
            Tensor a = rand_tensor({1, 1, 4, 4}, rng, -1, 1); // power-of-two: radix-2 path
            return check_gradients("dft2", [](const std::vector<Tensor>& in) {
                ComplexSpectrum s = dft2(in[0]);
                return weighted(s.real, 39) + weighted(s.imag, 40); }, {a}, o);
        });
        op("dft2_direct", 30, [](GradCheckOptions o) {
            Rng rng(130);
            Tensor a = rand_tensor({1, 1, 6, 6}, rng, -1, 1); // non-power-of-two: direct path
            return check_gradients("dft2_direct", [](const std::vector<Tensor>& in) {
                ComplexSpectrum s = dft2(in[0]);
                return weighted(s.real, 41) + weighted(s.imag, 42); }, {a}, o);
        });
        op("idft2", 31, [](GradCheckOptions o) {
            Rng rng(131);
            Tensor re = rand_tensor({1, 1, 4, 4}, rng, -1, 1);
            Tensor im = rand_tensor({1, 1, 4, 4}, rng, -1, 1);
            return check_gradients("idft2", [](const std::vector<Tensor>& in) {
                return weighted(idft2({in[0], in[1]}), 43); }, {re, im}, o);
        });
        op("to_amp_phase", 32, [](GradCheckOptions o) {
            // atan2's curvature near the origin inflates central-difference
            // truncation; a smaller step keeps it well under the threshold
            // while roundoff stays negligible
            o.h = 1e-4;
            Rng rng(132);
            // both parts bounded away from zero keeps the probe off the branch cut
            Tensor re = signed_rand_tensor({1, 1, 3, 3}, rng, 0.3, 1.0);
            Tensor im = signed_rand_tensor({1, 1, 3, 3}, rng, 0.3, 1.0);
            return check_gradients("to_amp_phase", [](const std::vector<Tensor>& in) {
                AmpPhase ap = to_amp_phase({in[0], in[1]});
                return weighted(ap.amplitude, 44) + weighted(ap.phase, 45); }, {re, im}, o);
        });
        op("polar_recompose", 33, [](GradCheckOptions o) {
            Rng rng(133);
            Tensor amp = rand_tensor({1, 1, 3, 3}, rng, 0.3, 1.2);
            Tensor ph = rand_tensor({1, 1, 3, 3}, rng, -2.0, 2.0);
            return check_gradients("polar_recompose", [](const std::vector<Tensor>& in) {
                ComplexSpectrum s = polar_recompose(in[0], in[1]);
                return weighted(s.real, 46) + weighted(s.imag, 47); }, {amp, ph}, o);
        });
        op("window_attention", 34, [](GradCheckOptions o) {
            Rng rng(134);
            Tensor q = rand_tensor({1, 2, 8, 8}, rng, -0.7, 0.7);
            Tensor k = rand_tensor({1, 2, 8, 8}, rng, -0.7, 0.7);
            Tensor v = rand_tensor({1, 2, 8, 8}, rng, -0.7, 0.7);
            AttentionConfig cfg = AttentionConfig::init(8);
            fill_uniform({cfg.position_bias}, rng, -0.3, 0.3);
            cfg.position_bias.node()->requires_grad = false;
            return check_gradients("window_attention", [cfg](const std::vector<Tensor>& in) {
                return weighted(window_attention(in[0], in[1], in[2], cfg), 48); }, {q, k, v}, o);
        });

        // --- composite blocks: inputs are the feature map plus every block
        // --- parameter (randomized away from the zero-bias degeneracy)
        auto block = [&](std::string name, std::uint64_t seed,
                         std::function<GradCheckReport(GradCheckOptions, Rng&)> fn) {
            e.push_back({name, [fn = std::move(fn), seed, name] {
                Rng rng(seed);
                return fn(composite_opts(seed), rng);
            }});
        };
        block("spectrum_filter", 3, [](GradCheckOptions o, Rng& rng) {
            SpectrumFilterParams p = SpectrumFilterParams::init(2, rng);
            std::vector<Tensor> inputs{detail::rand_tensor({1, 2, 8, 8}, rng, -0.8, 0.8)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("spectrum_filter", [p](const std::vector<Tensor>& in) {
                return weighted(spectrum_filter(in[0], p), 51); }, inputs, o);
        });
        block("fsda", 4, [](GradCheckOptions o, Rng& rng) {
            FSDAParams p = FSDAParams::init(2, rng);
            std::vector<Tensor> inputs{detail::rand_tensor({1, 2, 8, 8}, rng, -0.8, 0.8)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("fsda", [p](const std::vector<Tensor>& in) {
                return weighted(fsda(in[0], p), 52); }, inputs, o);
        });
        block("fdp", 5, [](GradCheckOptions o, Rng& rng) {
            FDPParams p = FDPParams::init(2, rng);
            std::vector<Tensor> inputs{detail::channel_ramp_tensor(2, 8, 8, rng)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("fdp", [p](const std::vector<Tensor>& in) {
                FDPOutput out = fdp(in[0], p);
                return weighted(out.q, 53) + weighted(out.k, 54) + weighted(out.v, 55); },
                inputs, o);
        });
        block("blp", 7, [](GradCheckOptions o, Rng& rng) {
            BLPParams p = BLPParams::init(2, 8, rng);
            // 6x6 features force the reflect-pad + crop path around attention
            std::vector<Tensor> inputs{detail::channel_ramp_tensor(2, 6, 6, rng)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("blp", [p](const std::vector<Tensor>& in) {
                return weighted(blp(in[0], p), 56); }, inputs, o);
        });
        block("bnm", 9, [](GradCheckOptions o, Rng& rng) {
            BNMParams p = BNMParams::init(2, rng);
            std::vector<Tensor> inputs{detail::rand_tensor({1, 2, 8, 8}, rng, -0.8, 0.8)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("bnm", [p](const std::vector<Tensor>& in) {
                return weighted(bnm(in[0], p), 57); }, inputs, o);
        });
        block("sfii_block", 10, [](GradCheckOptions o, Rng& rng) {
            SFIIParams p = SFIIParams::init(2, 8, rng);
            std::vector<Tensor> inputs{detail::channel_ramp_tensor(2, 8, 8, rng)};
            std::vector<Tensor> ps;
            p.collect(ps);
            fill_uniform(ps, rng, -0.5, 0.5);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("sfii_block", [p](const std::vector<Tensor>& in) {
                return weighted(sfii_block(in[0], p), 58); }, inputs, o);
        });

        // --- end to end: the full network, then the full objective ---
        e.push_back({"network", [] {
            NetworkConfig net;
            net.base_channels = 4;
            net.sfii_blocks_per_stage = 1;
            net.window = 8;
            Rng rng(7);
            NetworkParams params = NetworkParams::init(net, rng);
            std::vector<Tensor> inputs{detail::rand_tensor({1, 3, 16, 16}, rng, 0.0, 1.0)};
            std::vector<Tensor> ps = params.collect();
            fill_uniform(ps, rng, -0.3, 0.3);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            return check_gradients("network", [params, net](const std::vector<Tensor>& in) {
                std::vector<Tensor> preds = forward(build_pyramid(in[0]), params, net);
                Tensor l = detail::weighted(preds[0], 61);
                for (std::size_t s = 1; s < preds.size(); ++s)
                    l = l + detail::weighted(preds[s], 61 + s);
                return l; }, inputs, detail::end_to_end_opts(7));
        }});
        e.push_back({"total_loss", [] {
            NetworkConfig net;
            net.base_channels = 4;
            net.sfii_blocks_per_stage = 1;
            net.window = 8;
            Rng rng(9);
            NetworkParams params = NetworkParams::init(net, rng);
            std::vector<Tensor> inputs{detail::rand_tensor({1, 3, 16, 16}, rng, 0.0, 1.0)};
            std::vector<Tensor> ps = params.collect();
            fill_uniform(ps, rng, -0.3, 0.3);
            inputs.insert(inputs.end(), ps.begin(), ps.end());
            Tensor target = detail::rand_tensor({1, 3, 16, 16}, rng, 0.0, 1.0, false);
            LossWeights w;
            return check_gradients("total_loss", [params, net, target, w](const std::vector<Tensor>& in) {
                ImagePyramid input_pyr = build_pyramid(in[0]);
                ImagePyramid target_pyr = build_pyramid(target);
                std::vector<Tensor> preds = forward(input_pyr, params, net);
                return total_loss(preds, target_pyr.levels, input_pyr.levels, w);
            }, inputs, detail::end_to_end_opts(9));
        }});
        return e;
    }();
    return entries;
}

inline std::vector<std::string> gradient_suite_names() {
    std::vector<std::string> names;
    for (const auto& entry : gradient_suite()) names.push_back(entry.name);
    return names;
}

inline std::vector<GradCheckReport> run_gradient_suite() {
    std::vector<GradCheckReport> reports;
    reports.reserve(gradient_suite().size());
    for (const auto& entry : gradient_suite()) reports.push_back(entry.run());
    return reports;
}

inline bool all_passed(const std::vector<GradCheckReport>& reports) {
    for (const auto& r : reports)
        if (!r.passed) return false;
    return !reports.empty();
}

inline void print_gradient_reports(const std::vector<GradCheckReport>& reports, std::FILE* out) {
    std::size_t failed = 0;
    for (const auto& r : reports) {
        std::fprintf(out, "%-18s max_rel_err %.3e  threshold %.0e  coords %4zu  %s\n",
                     r.name.c_str(), r.max_rel_err, r.threshold, r.coords_checked,
                     r.passed ? "PASS" : "FAIL");
        if (!r.passed) ++failed;
    }
    std::fprintf(out, "coverage: %zu checks, %zu failed\n", reports.size(), failed);
}

} // namespace sfsnid
