#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "sfsnid/fourier.hpp"
#include "sfsnid/ops.hpp"
#include "sfsnid/rng.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

// ---------------------------------------------------------------------------
// loss configuration
// ---------------------------------------------------------------------------

struct LossWeights {
    real lambda_g = 1.0; // spatial-term scale
    real lambda_f = 1.0; // frequency-term scale
    real lambda_b = 1.0; // brightness-term scale
    real alpha = 0.1;    // total-loss weight on the frequency term
    real beta = 20.0;    // total-loss weight on the brightness term
    real kappa = 1.3;    // brightness intensity coefficient, >= 1
    real xi = 1.0;       // brightness target factor, > 0
    std::array<int, 3> gamma{16, 8, 4}; // brightness window per scale, fine -> coarse

    void validate() const {
        require(kappa >= 1.0, "LossWeights: kappa must be >= 1");
        require(xi > 0.0, "LossWeights: xi must be > 0");
        for (int g : gamma) require(g >= 1, "LossWeights: gamma entries must be >= 1");
    }
};

namespace detail {

inline void require_aligned_pyramids(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                                     const char* who) {
    require(!a.empty() && a.size() == b.size(),
            std::string(who) + ": pyramids must be nonempty and the same depth");
    for (std::size_t s = 0; s < a.size(); ++s)
        require(a[s].shape() == b[s].shape(), std::string(who) + ": shape mismatch at scale " +
                                                  std::to_string(s) + ": " +
                                                  shape_str(a[s].shape()) + " vs " +
                                                  shape_str(b[s].shape()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// supervised losses
// ---------------------------------------------------------------------------

// spatial L1 across scales: sum_s lambda_g * mean |p^s - y^s|
inline Tensor loss_spatial(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                           const LossWeights& w) {
    detail::require_aligned_pyramids(preds, targets, "loss_spatial");
    Tensor acc;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        Tensor term = mean(abs_val(preds[s] - targets[s]));
        acc = acc.defined() ? acc + term : term;
    }
    return scale(acc, w.lambda_g);
}

// frequency L1 across scales: sum_s lambda_f * mean(|dRe| + |dIm|) over transform bins
inline Tensor loss_frequency(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                             const LossWeights& w) {
    detail::require_aligned_pyramids(preds, targets, "loss_frequency");
    Tensor acc;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        ComplexSpectrum fp = dft2(preds[s]);
        ComplexSpectrum fy = dft2(targets[s]);
        Tensor term = mean(abs_val(fp.real - fy.real)) + mean(abs_val(fp.imag - fy.imag));
        acc = acc.defined() ? acc + term : term;
    }
    return scale(acc, w.lambda_f);
}

// ---------------------------------------------------------------------------
// local brightness
// ---------------------------------------------------------------------------

// window means over the channel dimension and non-overlapping gamma x gamma
// tiles; dims that gamma does not divide are reflect-padded first.
// [B,C,H,W] -> [B,1,ceil(H/g),ceil(W/g)]
inline Tensor brightness_map_batched(const Tensor& x, int window) {
    detail::require_rank4(x, "brightness_map_batched");
    require(window >= 1, "brightness_map_batched: window must be >= 1");
    Tensor padded = pad_to_multiple(x, window);
    return mean_channels(avg_pool(padded, window, window));
}

struct BrightnessMap {
    Tensor values; // [H/window, W/window]
    int window = 0;
};

// single-image convenience wrapper; accepts [C,H,W] or [1,C,H,W]
inline BrightnessMap local_brightness_map(const Tensor& x, int window) {
    std::vector<int> shape = x.shape();
    require(shape.size() == 3 || (shape.size() == 4 && shape[0] == 1),
            "local_brightness_map: expected a single [C,H,W] image, got " + shape_str(shape));
    Tensor batched = x;
    if (shape.size() == 3)
        batched = Tensor::from({1, shape[0], shape[1], shape[2]}, x.values());
    Tensor map = brightness_map_batched(batched, window);
    return {Tensor::from({map.dim(2), map.dim(3)}, map.values()), window};
}

// brightness loss across scales: sum_s lambda_b * mean (phi_p - xi * phi_x^kappa)^2,
// the mean running over batch and window grid
inline Tensor loss_brightness(const std::vector<Tensor>& preds, const std::vector<Tensor>& inputs,
                              const LossWeights& w) {
    detail::require_aligned_pyramids(preds, inputs, "loss_brightness");
    require(preds.size() <= w.gamma.size(),
            "loss_brightness: more scales than configured gamma windows");
    w.validate();
    Tensor acc;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        const int g = w.gamma[s];
        Tensor phi_p = brightness_map_batched(preds[s], g);
        Tensor phi_x = brightness_map_batched(inputs[s], g);
        for (real v : phi_x.values())
            require(v >= 0.0 && v <= 1.0,
                    "loss_brightness: input brightness outside [0,1]; got " + std::to_string(v));
        Tensor target = scale(power(phi_x, w.kappa), w.xi);
        Tensor diff = phi_p - target;
        Tensor term = mean(diff * diff);
        acc = acc.defined() ? acc + term : term;
    }
    return scale(acc, w.lambda_b);
}

// L = L_G + alpha * L_F + beta * L_B
inline Tensor total_loss(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                         const std::vector<Tensor>& inputs, const LossWeights& w) {
    Tensor l = loss_spatial(preds, targets, w);
    if (w.alpha != 0.0) l = l + scale(loss_frequency(preds, targets, w), w.alpha);
    if (w.beta != 0.0) l = l + scale(loss_brightness(preds, inputs, w), w.beta);
    return l;
}

// ---------------------------------------------------------------------------
// brightness prior statistic
// ---------------------------------------------------------------------------

inline real mean_brightness(const Tensor& img) {
    const auto& v = img.values();
    require(!v.empty(), "mean_brightness: empty image");
    return std::accumulate(v.begin(), v.end(), real(0)) / static_cast<real>(v.size());
}

struct BrightnessPriorReport {
    std::size_t trials = 0;
    std::size_t holds = 0;  // trials where sum mu(clear) < sum mu(hazy), strictly
    real fraction = 0.0;
};

// Draws a random half-subset of the (paired) sets per trial and tests whether
// the clear images' summed mean brightness is strictly below the hazy images'.
// The same index subset is used on both sides, so identical sets always tie
// and report fraction 0.
inline BrightnessPriorReport brightness_prior_check(const std::vector<Tensor>& set_clear,
                                                    const std::vector<Tensor>& set_hazy,
                                                    std::size_t trials, Rng& rng) {
    require(!set_clear.empty() && set_clear.size() == set_hazy.size(),
            "brightness_prior_check: sets must be nonempty and the same size");
    std::vector<real> mu_clear(set_clear.size()), mu_hazy(set_hazy.size());
    for (std::size_t i = 0; i < set_clear.size(); ++i) {
        mu_clear[i] = mean_brightness(set_clear[i]);
        mu_hazy[i] = mean_brightness(set_hazy[i]);
    }
    const std::size_t subset = std::max<std::size_t>(1, set_clear.size() / 2);
    std::vector<std::size_t> idx(set_clear.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    BrightnessPriorReport report;
    report.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        rng.shuffle(idx);
        real sum_clear = 0, sum_hazy = 0;
        for (std::size_t k = 0; k < subset; ++k) {
            sum_clear += mu_clear[idx[k]];
            sum_hazy += mu_hazy[idx[k]];
        }
        if (sum_clear < sum_hazy) ++report.holds;
    }
    report.fraction = trials == 0 ? 0.0 : static_cast<real>(report.holds) / trials;
    return report;
}

// ---------------------------------------------------------------------------
// full-reference metrics (plain value computations, no gradient tracking)
// ---------------------------------------------------------------------------

constexpr real kPsnrCap = 100.0; // sentinel for a vanishing-error pair

inline real psnr(const Tensor& a, const Tensor& b, real peak = 1.0) {
    require(a.shape() == b.shape(), "psnr: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    require(peak > 0.0, "psnr: peak must be positive");
    const auto& va = a.values();
    const auto& vb = b.values();
    real se = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const real d = va[i] - vb[i];
        se += d * d;
    }
    const real rmse = std::sqrt(se / static_cast<real>(va.size()));
    if (rmse < 1e-10) return kPsnrCap;
    return 20.0 * std::log10(peak / rmse);
}

namespace detail {

inline const std::vector<real>& ssim_window() {
    static const std::vector<real> w = [] {
        constexpr int n = 11;
        constexpr real sigma = 1.5;
        std::vector<real> k(n * n);
        real total = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const real di = i - (n - 1) / 2.0, dj = j - (n - 1) / 2.0;
                k[i * n + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
                total += k[i * n + j];
            }
        for (real& v : k) v /= total;
        return k;
    }();
    return w;
}

// mean structural similarity of one H x W plane pair, valid-mode windows
inline real ssim_plane(const real* x, const real* y, int H, int W) {
    constexpr int n = 11;
    constexpr real c1 = 0.01 * 0.01; // (K1 * L)^2 with L = 1
    constexpr real c2 = 0.03 * 0.03; // (K2 * L)^2
    const std::vector<real>& win = ssim_window();
    real acc = 0;
    std::size_t count = 0;
    for (int top = 0; top + n <= H; ++top)
        for (int left = 0; left + n <= W; ++left) {
            real mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const real wv = win[i * n + j];
                    const real xv = x[(top + i) * W + left + j];
                    const real yv = y[(top + i) * W + left + j];
                    mx += wv * xv;
                    my += wv * yv;
                    xx += wv * xv * xv;
                    yy += wv * yv * yv;
                    xy += wv * xv * yv;
                }
            const real vx = xx - mx * mx;
            const real vy = yy - my * my;
            const real cxy = xy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    require(count > 0, "ssim: plane smaller than the 11x11 window");
    return acc / static_cast<real>(count);
}

} // namespace detail

// mean SSIM with the standard 11x11 Gaussian window (sigma 1.5), averaged over
// channels (and batch for rank-4 inputs); requires each plane >= 11x11
inline real ssim(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "ssim: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    const auto& shape = a.shape();
    require(shape.size() == 3 || shape.size() == 4,
            "ssim: expected [C,H,W] or [B,C,H,W], got " + shape_str(shape));
    const int H = shape[shape.size() - 2];
    const int W = shape[shape.size() - 1];
    require(H >= 11 && W >= 11, "ssim: image smaller than the 11x11 window: " + shape_str(shape));
    const std::size_t planes = a.size() / (static_cast<std::size_t>(H) * W);
    const real* pa = a.data();
    const real* pb = b.data();
    real acc = 0;
    for (std::size_t p = 0; p < planes; ++p)
        acc += detail::ssim_plane(pa + p * H * W, pb + p * H * W, H, W);
    return acc / static_cast<real>(planes);
}

} // namespace sfsnid
