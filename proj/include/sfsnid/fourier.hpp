#pragma once

#include <cmath>
#include <memory>
#include <unordered_map>
#include <vector>

#include "sfsnid/ops.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

// Per-channel 2-D spectrum of a [B,C,H,W] tensor. Forward transform is
// unnormalized; the 1/(H*W) factor lives in the inverse.
struct ComplexSpectrum {
    Tensor real;
    Tensor imag;

    int batch() const { return real.dim(0); }
    int channels() const { return real.dim(1); }
    int height() const { return real.dim(2); }
    int width() const { return real.dim(3); }
};

struct AmpPhase {
    Tensor amplitude; // nonnegative
    Tensor phase;     // radians in (-pi, pi]
};

namespace detail {

// cached machinery for 1-D transforms -------------------------------------

struct Radix2Plan {
    std::vector<int> bitrev;
    std::vector<real> wre, wim; // e^{-2*pi*i*k/n} for k in [0, n/2)
};

struct DirectPlan {
    std::vector<real> cre, cim; // e^{-2*pi*i*k/n} for k in [0, n)
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline const Radix2Plan& radix2_plan(int n) {
    thread_local std::unordered_map<int, std::unique_ptr<Radix2Plan>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        auto plan = std::make_unique<Radix2Plan>();
        plan->bitrev.resize(n);
        int bits = 0;
        while ((1 << bits) < n) ++bits;
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < bits; ++b)
                if (i & (1 << b)) r |= 1 << (bits - 1 - b);
            plan->bitrev[i] = r;
        }
        plan->wre.resize(n / 2);
        plan->wim.resize(n / 2);
        for (int k = 0; k < n / 2; ++k) {
            const real ang = -2.0 * kPi * k / n;
            plan->wre[k] = std::cos(ang);
            plan->wim[k] = std::sin(ang);
        }
        it = cache.emplace(n, std::move(plan)).first;
    }
    return *it->second;
}

inline const DirectPlan& direct_plan(int n) {
    thread_local std::unordered_map<int, std::unique_ptr<DirectPlan>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        auto plan = std::make_unique<DirectPlan>();
        plan->cre.resize(n);
        plan->cim.resize(n);
        for (int k = 0; k < n; ++k) {
            const real ang = -2.0 * kPi * k / n;
            plan->cre[k] = std::cos(ang);
            plan->cim[k] = std::sin(ang);
        }
        it = cache.emplace(n, std::move(plan)).first;
    }
    return *it->second;
}

// unnormalized 1-D transform of a contiguous complex signal; inverse flips
// the twiddle sign only (no 1/n scaling here)
inline void transform_1d(real* re, real* im, int n, bool inverse) {
    if (n == 1) return;
    if (is_pow2(n)) {
        const Radix2Plan& plan = radix2_plan(n);
        for (int i = 0; i < n; ++i) {
            const int r = plan.bitrev[i];
            if (i < r) {
                std::swap(re[i], re[r]);
                std::swap(im[i], im[r]);
            }
        }
        for (int len = 2; len <= n; len <<= 1) {
            const int half = len >> 1;
            const int step = n / len;
            for (int base = 0; base < n; base += len) {
                for (int j = 0; j < half; ++j) {
                    const real wr = plan.wre[j * step];
                    const real wi = inverse ? -plan.wim[j * step] : plan.wim[j * step];
                    const int a = base + j, b = a + half;
                    const real vr = re[b] * wr - im[b] * wi;
                    const real vi = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - vr;
                    im[b] = im[a] - vi;
                    re[a] += vr;
                    im[a] += vi;
                }
            }
        }
        return;
    }
    // direct O(n^2) fallback for non-power-of-two lengths
    const DirectPlan& plan = direct_plan(n);
    std::vector<real> or_(n), oi(n);
    for (int k = 0; k < n; ++k) {
        real sr = 0, si = 0;
        std::size_t idx = 0;
        for (int j = 0; j < n; ++j) {
            const real wr = plan.cre[idx];
            const real wi = inverse ? -plan.cim[idx] : plan.cim[idx];
            sr += re[j] * wr - im[j] * wi;
            si += re[j] * wi + im[j] * wr;
            idx += static_cast<std::size_t>(k);
            if (idx >= static_cast<std::size_t>(n)) idx %= static_cast<std::size_t>(n);
        }
        or_[k] = sr;
        oi[k] = si;
    }
    std::copy(or_.begin(), or_.end(), re);
    std::copy(oi.begin(), oi.end(), im);
}

// unnormalized 2-D transform of one [H,W] plane (row-column decomposition)
inline void transform_2d(real* re, real* im, int H, int W, bool inverse) {
    for (int h = 0; h < H; ++h) {
        transform_1d(re + static_cast<std::size_t>(h) * W, im + static_cast<std::size_t>(h) * W, W,
                     inverse);
    }
    if (H == 1) return;
    std::vector<real> tre(static_cast<std::size_t>(H) * W), tim(static_cast<std::size_t>(H) * W);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            tre[static_cast<std::size_t>(w) * H + h] = re[static_cast<std::size_t>(h) * W + w];
            tim[static_cast<std::size_t>(w) * H + h] = im[static_cast<std::size_t>(h) * W + w];
        }
    for (int w = 0; w < W; ++w) {
        transform_1d(tre.data() + static_cast<std::size_t>(w) * H,
                     tim.data() + static_cast<std::size_t>(w) * H, H, inverse);
    }
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            re[static_cast<std::size_t>(h) * W + w] = tre[static_cast<std::size_t>(w) * H + h];
            im[static_cast<std::size_t>(h) * W + w] = tim[static_cast<std::size_t>(w) * H + h];
        }
}

// transform every channel plane of a [B,C,H,W] pair in place
inline void transform_planes(std::vector<real>& re, std::vector<real>& im,
                             const std::vector<int>& shape, bool inverse) {
    const int H = shape[2], W = shape[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t planes = re.size() / plane;
    for (std::size_t p = 0; p < planes; ++p) {
        transform_2d(re.data() + p * plane, im.data() + p * plane, H, W, inverse);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// differentiable transforms
// ---------------------------------------------------------------------------

// forward 2-D DFT of each channel: F(u,v) = sum_{h,w} z(h,w) e^{-2*pi*i(uh/H + vw/W)}
inline ComplexSpectrum dft2(const Tensor& z) {
    detail::require_rank4(z, "dft2");
    require(z.dim(2) >= 1 && z.dim(3) >= 1, "dft2: empty spatial dims");
    std::vector<real> re(z.values());
    std::vector<real> im(z.size(), 0.0);
    detail::transform_planes(re, im, z.shape(), /*inverse=*/false);
    // The spectrum of a real plane is Hermitian, so bins that are their own
    // conjugate partner ((2u mod H, 2v mod W) == (0, 0)) are exactly real.
    // Clear the round-off noise the direct transform leaves there; a noise-sign
    // flip at such a bin would otherwise swing the phase across the atan2
    // branch cut.
    {
        const int H = z.dim(2), W = z.dim(3);
        const std::size_t planes = z.size() / (static_cast<std::size_t>(H) * W);
        std::vector<int> self_h{0}, self_w{0};
        if (H % 2 == 0 && H > 1) self_h.push_back(H / 2);
        if (W % 2 == 0 && W > 1) self_w.push_back(W / 2);
        for (std::size_t p = 0; p < planes; ++p)
            for (int u : self_h)
                for (int v : self_w)
                    im[p * H * W + static_cast<std::size_t>(u) * W + v] = 0.0;
    }
    const bool track = detail::should_record({&z});
    Tensor out_re = detail::make_output(z.shape(), std::move(re), track, "dft2");
    Tensor out_im = detail::make_output(z.shape(), std::move(im), track, "dft2");
    if (track) {
        Tape::active().record(
            {out_re.node(), out_im.node()},
            [zn = z.node(), rn = out_re.node(), in_ = out_im.node()] {
                if (!zn->requires_grad) return;
                zn->ensure_grad();
                // d/dz of a linear map: sign-flipped unnormalized transform of the
                // output cotangent, real part
                std::vector<real> gre = rn->has_grad() ? rn->grad
                                                       : std::vector<real>(zn->value.size(), 0.0);
                std::vector<real> gim = in_->has_grad() ? in_->grad
                                                        : std::vector<real>(zn->value.size(), 0.0);
                detail::transform_planes(gre, gim, zn->shape, /*inverse=*/true);
                for (std::size_t i = 0; i < gre.size(); ++i) zn->grad[i] += gre[i];
            });
    }
    return {out_re, out_im};
}

// inverse 2-D DFT with 1/(H*W) normalization; returns the real part
inline Tensor idft2(const ComplexSpectrum& s) {
    detail::require_rank4(s.real, "idft2");
    detail::require_same_shape(s.real, s.imag, "idft2");
    const int H = s.height(), W = s.width();
    const real norm = 1.0 / (static_cast<real>(H) * W);
    std::vector<real> re(s.real.values());
    std::vector<real> im(s.imag.values());
    detail::transform_planes(re, im, s.real.shape(), /*inverse=*/true);
    for (auto& v : re) v *= norm;
    const bool track = detail::should_record({&s.real, &s.imag});
    Tensor out = detail::make_output(s.real.shape(), std::move(re), track, "idft2");
    if (track) {
        Tape::active().record(
            {out.node()},
            [rn = s.real.node(), in_ = s.imag.node(), on = out.node(), norm] {
                if (!rn->requires_grad && !in_->requires_grad) return;
                std::vector<real> gre = on->grad;
                std::vector<real> gim(gre.size(), 0.0);
                detail::transform_planes(gre, gim, on->shape, /*inverse=*/false);
                if (rn->requires_grad) {
                    rn->ensure_grad();
                    for (std::size_t i = 0; i < gre.size(); ++i) rn->grad[i] += norm * gre[i];
                }
                if (in_->requires_grad) {
                    in_->ensure_grad();
                    for (std::size_t i = 0; i < gim.size(); ++i) in_->grad[i] += norm * gim[i];
                }
            });
    }
    return out;
}

// ---------------------------------------------------------------------------
// amplitude / phase algebra
// ---------------------------------------------------------------------------

inline AmpPhase to_amp_phase(const ComplexSpectrum& s) {
    detail::require_same_shape(s.real, s.imag, "to_amp_phase");
    const std::size_t n = s.real.size();
    std::vector<real> amp(n), ph(n);
    const real* pr = s.real.data();
    const real* pi = s.imag.data();
    for (std::size_t i = 0; i < n; ++i) {
        amp[i] = std::sqrt(pr[i] * pr[i] + pi[i] * pi[i]);
        ph[i] = (pr[i] == 0.0 && pi[i] == 0.0) ? 0.0 : std::atan2(pi[i], pr[i]);
    }
    const bool track = detail::should_record({&s.real, &s.imag});
    Tensor out_amp = detail::make_output(s.real.shape(), std::move(amp), track, "to_amp_phase");
    Tensor out_ph = detail::make_output(s.real.shape(), std::move(ph), track, "to_amp_phase");
    if (track) {
        Tape::active().record(
            {out_amp.node(), out_ph.node()},
            [rn = s.real.node(), in_ = s.imag.node(), an = out_amp.node(), pn = out_ph.node()] {
                const bool need_r = rn->requires_grad;
                const bool need_i = in_->requires_grad;
                if (!need_r && !need_i) return;
                if (need_r) rn->ensure_grad();
                if (need_i) in_->ensure_grad();
                const bool has_a = an->has_grad();
                const bool has_p = pn->has_grad();
                for (std::size_t i = 0; i < an->value.size(); ++i) {
                    const real re = rn->value[i], im = in_->value[i];
                    const real a = an->value[i];
                    real dre = 0, dim = 0;
                    if (a > 0.0) { // zero-amplitude bins keep zero gradient by convention
                        if (has_a) {
                            dre += an->grad[i] * re / a;
                            dim += an->grad[i] * im / a;
                        }
                        if (has_p) {
                            const real inv_a2 = 1.0 / (a * a);
                            dre += pn->grad[i] * (-im) * inv_a2;
                            dim += pn->grad[i] * re * inv_a2;
                        }
                    }
                    if (need_r) rn->grad[i] += dre;
                    if (need_i) in_->grad[i] += dim;
                }
            });
    }
    return {out_amp, out_ph};
}

// A*cos(P), A*sin(P) without any sign restriction on A; shared by
// from_amp_phase and the learned-filter path where the filtered amplitude is
// unconstrained
inline ComplexSpectrum polar_recompose(const Tensor& amplitude, const Tensor& phase) {
    detail::require_same_shape(amplitude, phase, "polar_recompose");
    const std::size_t n = amplitude.size();
    std::vector<real> re(n), im(n);
    const real* pa = amplitude.data();
    const real* pp = phase.data();
    for (std::size_t i = 0; i < n; ++i) {
        re[i] = pa[i] * std::cos(pp[i]);
        im[i] = pa[i] * std::sin(pp[i]);
    }
    const bool track = detail::should_record({&amplitude, &phase});
    Tensor out_re = detail::make_output(amplitude.shape(), std::move(re), track, "polar_recompose");
    Tensor out_im = detail::make_output(amplitude.shape(), std::move(im), track, "polar_recompose");
    if (track) {
        Tape::active().record(
            {out_re.node(), out_im.node()},
            [an = amplitude.node(), pn = phase.node(), rn = out_re.node(), in_ = out_im.node()] {
                const bool need_a = an->requires_grad;
                const bool need_p = pn->requires_grad;
                if (!need_a && !need_p) return;
                if (need_a) an->ensure_grad();
                if (need_p) pn->ensure_grad();
                const bool has_r = rn->has_grad();
                const bool has_i = in_->has_grad();
                for (std::size_t i = 0; i < an->value.size(); ++i) {
                    const real a = an->value[i], p = pn->value[i];
                    const real c = std::cos(p), s = std::sin(p);
                    const real gr = has_r ? rn->grad[i] : 0.0;
                    const real gi = has_i ? in_->grad[i] : 0.0;
                    if (need_a) an->grad[i] += gr * c + gi * s;
                    if (need_p) pn->grad[i] += gr * (-a * s) + gi * (a * c);
                }
            });
    }
    return {out_re, out_im};
}

inline ComplexSpectrum from_amp_phase(const AmpPhase& ap) {
    for (real a : ap.amplitude.values()) {
        if (a < 0) fail("from_amp_phase: negative amplitude " + std::to_string(a));
    }
    return polar_recompose(ap.amplitude, ap.phase);
}

// ---------------------------------------------------------------------------
// value-level fast transforms (no gradient tape)
// ---------------------------------------------------------------------------

inline ComplexSpectrum fft_fast(const Tensor& z) {
    NoGradGuard guard;
    return dft2(z);
}

inline Tensor ifft_fast(const ComplexSpectrum& s) {
    NoGradGuard guard;
    return idft2(s);
}

} // namespace sfsnid
