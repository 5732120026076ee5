#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sfsnid/tensor.hpp"

namespace sfsnid {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch between " +
                                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

inline void require_rank4(const Tensor& x, const char* op) {
    require(x.rank() == 4, std::string(op) + ": expected a [B,C,H,W] tensor, got " +
                               shape_str(x.shape()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<real> v(a.size());
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + pb[i];
    const bool track = detail::should_record({&a, &b});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "add");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
            const auto& g = on->grad;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
            }
        });
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<real> v(a.size());
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] - pb[i];
    const bool track = detail::should_record({&a, &b});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "sub");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
            const auto& g = on->grad;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
            }
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<real> v(a.size());
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * pb[i];
    const bool track = detail::should_record({&a, &b});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "mul");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
            const auto& g = on->grad;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->value[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, real s) {
    std::vector<real> v(a.size());
    const real* pa = a.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * s;
    const bool track = detail::should_record({&a});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "scale");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), on = out.node(), s] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * s;
        });
    }
    return out;
}

// elementwise x^p; fractional p requires nonnegative base
inline Tensor power(const Tensor& a, real p) {
    const bool fractional = p != std::floor(p);
    std::vector<real> v(a.size());
    const real* pa = a.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (fractional && pa[i] < 0) {
            fail("power: negative base " + std::to_string(pa[i]) +
                 " with fractional exponent " + std::to_string(p));
        }
        v[i] = std::pow(pa[i], p);
    }
    const bool track = detail::should_record({&a});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "power");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), on = out.node(), p] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                an->grad[i] += on->grad[i] * p * std::pow(an->value[i], p - 1.0);
            }
        });
    }
    return out;
}

inline Tensor abs_val(const Tensor& a) {
    std::vector<real> v(a.size());
    const real* pa = a.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(pa[i]);
    const bool track = detail::should_record({&a});
    Tensor out = detail::make_output(a.shape(), std::move(v), track, "abs");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), on = out.node()] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                const real x = an->value[i];
                // subgradient 0 at the kink
                an->grad[i] += on->grad[i] * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
            }
        });
    }
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Tensor leaky_relu(const Tensor& x, real slope) {
    std::vector<real> v(x.size());
    const real* px = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = px[i] >= 0 ? px[i] : slope * px[i];
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output(x.shape(), std::move(v), track, "leaky_relu");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), slope] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                xn->grad[i] += on->grad[i] * (xn->value[i] >= 0 ? 1.0 : slope);
            }
        });
    }
    return out;
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<real> v(x.size());
    const real* px = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-px[i]));
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output(x.shape(), std::move(v), track, "sigmoid");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node()] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                const real y = on->value[i];
                xn->grad[i] += on->grad[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

inline Tensor softmax(const Tensor& x, int axis) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    require(axis >= 0 && axis < r, "softmax: axis out of range for " + shape_str(x.shape()));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
    const std::size_t n = static_cast<std::size_t>(x.dim(axis));
    for (int i = axis + 1; i < r; ++i) inner *= static_cast<std::size_t>(x.dim(i));

    std::vector<real> v(x.size());
    const real* px = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            real mx = px[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, px[base + i * inner]);
            real denom = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const real e = std::exp(px[base + i * inner] - mx);
                v[base + i * inner] = e;
                denom += e;
            }
            const real inv = 1.0 / denom;
            for (std::size_t i = 0; i < n; ++i) v[base + i * inner] *= inv;
        }
    }
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output(x.shape(), std::move(v), track, "softmax");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), outer, n, inner] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const auto& g = on->grad;
            const auto& y = on->value;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    real dot = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t k = base + i * inner;
                        dot += g[k] * y[k];
                    }
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t k = base + i * inner;
                        xn->grad[k] += (g[k] - dot) * y[k];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    real s = 0;
    for (real v : x.values()) s += v;
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output({1}, {s}, track, "sum");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node()] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const real g = on->grad[0];
            for (auto& gx : xn->grad) gx += g;
        });
    }
    return out;
}

inline Tensor mean(const Tensor& x) {
    require(x.size() > 0, "mean of an empty tensor");
    real s = 0;
    for (real v : x.values()) s += v;
    const real inv = 1.0 / static_cast<real>(x.size());
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output({1}, {s * inv}, track, "mean");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), inv] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const real g = on->grad[0] * inv;
            for (auto& gx : xn->grad) gx += g;
        });
    }
    return out;
}

// [B,C,H,W] -> [B,1,H,W]
inline Tensor mean_channels(const Tensor& x) {
    detail::require_rank4(x, "mean_channels");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<real> v(static_cast<std::size_t>(B) * plane, 0.0);
    const real* px = x.data();
    const real inv = 1.0 / C;
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const real* src = px + (static_cast<std::size_t>(b) * C + c) * plane;
            real* dst = v.data() + static_cast<std::size_t>(b) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    for (auto& e : v) e *= inv;
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output({B, 1, H, W}, std::move(v), track, "mean_channels");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), B, C, plane, inv] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int b = 0; b < B; ++b) {
                const real* g = on->grad.data() + static_cast<std::size_t>(b) * plane;
                for (int c = 0; c < C; ++c) {
                    real* dst = xn->grad.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i] * inv;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

inline Tensor concat_channels(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "concat_channels: empty input list");
    const int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int Ctot = 0;
    bool track = false;
    for (const auto& x : xs) {
        detail::require_rank4(x, "concat_channels");
        require(x.dim(0) == B && x.dim(2) == H && x.dim(3) == W,
                "concat_channels: incompatible shape " + shape_str(x.shape()));
        Ctot += x.dim(1);
        track = track || (grad_enabled() && x.requires_grad());
    }
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<real> v(static_cast<std::size_t>(B) * Ctot * plane);
    std::size_t coff = 0;
    for (const auto& x : xs) {
        const int C = x.dim(1);
        for (int b = 0; b < B; ++b) {
            const real* src = x.data() + static_cast<std::size_t>(b) * C * plane;
            real* dst = v.data() + (static_cast<std::size_t>(b) * Ctot + coff) * plane;
            std::copy(src, src + static_cast<std::size_t>(C) * plane, dst);
        }
        coff += static_cast<std::size_t>(C);
    }
    Tensor out = detail::make_output({B, Ctot, H, W}, std::move(v), track, "concat_channels");
    if (track) {
        std::vector<NodePtr> nodes;
        nodes.reserve(xs.size());
        for (const auto& x : xs) nodes.push_back(x.node());
        Tape::active().record({out.node()}, [nodes, on = out.node(), B, Ctot, plane] {
            std::size_t coff = 0;
            for (const auto& xn : nodes) {
                const int C = xn->shape[1];
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    for (int b = 0; b < B; ++b) {
                        const real* g = on->grad.data() +
                                        (static_cast<std::size_t>(b) * Ctot + coff) * plane;
                        real* dst = xn->grad.data() + static_cast<std::size_t>(b) * C * plane;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(C) * plane; ++i) {
                            dst[i] += g[i];
                        }
                    }
                }
                coff += static_cast<std::size_t>(C);
            }
        });
    }
    return out;
}

// out[i] = x[idx[i]]; the backward pass scatter-adds. Shared by padding,
// cropping, upsampling and window (de)partitioning.
inline Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::int64_t>> idx,
                     std::vector<int> out_shape) {
    const std::size_t n = numel(out_shape);
    require(idx && idx->size() == n, "gather: index map size does not match output shape");
    std::vector<real> v(n);
    const real* px = x.data();
    const std::int64_t limit = static_cast<std::int64_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t k = (*idx)[i];
        require(k >= 0 && k < limit, "gather: index out of range");
        v[i] = px[k];
    }
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output(std::move(out_shape), std::move(v), track, "gather");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), idx] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                xn->grad[(*idx)[i]] += on->grad[i];
            }
        });
    }
    return out;
}

inline Tensor upsample2x(const Tensor& x) {
    detail::require_rank4(x, "upsample2x");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(B) * C * 4 * H * W);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < 2 * H; ++h)
                for (int w = 0; w < 2 * W; ++w)
                    idx->push_back(((static_cast<std::int64_t>(b) * C + c) * H + h / 2) * W + w / 2);
    return gather(x, std::move(idx), {B, C, 2 * H, 2 * W});
}

inline Tensor pad_reflect(const Tensor& x, int top, int bottom, int left, int right) {
    detail::require_rank4(x, "pad_reflect");
    require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_reflect: negative pad");
    if (top == 0 && bottom == 0 && left == 0 && right == 0) return x;
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H + top + bottom, Wo = W + left + right;
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(B) * C * Ho * Wo);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Ho; ++h) {
                const int sh = mirror_index(h - top, H);
                for (int w = 0; w < Wo; ++w) {
                    const int sw = mirror_index(w - left, W);
                    idx->push_back(((static_cast<std::int64_t>(b) * C + c) * H + sh) * W + sw);
                }
            }
    return gather(x, std::move(idx), {B, C, Ho, Wo});
}

inline Tensor crop(const Tensor& x, int top, int left, int oh, int ow) {
    detail::require_rank4(x, "crop");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(top >= 0 && left >= 0 && top + oh <= H && left + ow <= W,
            "crop: window exceeds input " + shape_str(x.shape()));
    if (top == 0 && left == 0 && oh == H && ow == W) return x;
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(B) * C * oh * ow);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < oh; ++h)
                for (int w = 0; w < ow; ++w)
                    idx->push_back(((static_cast<std::int64_t>(b) * C + c) * H + (top + h)) * W +
                                   (left + w));
    return gather(x, std::move(idx), {B, C, oh, ow});
}

// ---------------------------------------------------------------------------
// matrix products (batched over leading dims)
// ---------------------------------------------------------------------------

namespace detail {

inline void matmul_dims(const Tensor& a, const Tensor& b, const char* op, std::size_t& batch,
                        int& m, int& k, int& n, bool transpose_b) {
    require(a.rank() >= 2 && b.rank() >= 2, std::string(op) + ": operands must have rank >= 2");
    require(a.rank() == b.rank(), std::string(op) + ": rank mismatch between " +
                                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
    batch = 1;
    for (int i = 0; i + 2 < a.rank(); ++i) {
        require(a.dim(i) == b.dim(i), std::string(op) + ": batch dim mismatch");
        batch *= static_cast<std::size_t>(a.dim(i));
    }
    m = a.dim(a.rank() - 2);
    k = a.dim(a.rank() - 1);
    if (transpose_b) {
        n = b.dim(b.rank() - 2);
        require(b.dim(b.rank() - 1) == k, std::string(op) + ": inner dim mismatch between " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
    } else {
        require(b.dim(b.rank() - 2) == k, std::string(op) + ": inner dim mismatch between " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
        n = b.dim(b.rank() - 1);
    }
}

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    std::size_t batch;
    int m, k, n;
    detail::matmul_dims(a, b, "matmul", batch, m, k, n, false);
    std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<real> v(batch * static_cast<std::size_t>(m) * n, 0.0);
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t t = 0; t < batch; ++t) {
        const real* A = pa + t * static_cast<std::size_t>(m) * k;
        const real* B = pb + t * static_cast<std::size_t>(k) * n;
        real* C = v.data() + t * static_cast<std::size_t>(m) * n;
        for (int i = 0; i < m; ++i) {
            for (int kk = 0; kk < k; ++kk) {
                const real aik = A[static_cast<std::size_t>(i) * k + kk];
                const real* Brow = B + static_cast<std::size_t>(kk) * n;
                real* Crow = C + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) Crow[j] += aik * Brow[j];
            }
        }
    }
    const bool track = detail::should_record({&a, &b});
    Tensor out = detail::make_output(std::move(out_shape), std::move(v), track, "matmul");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), bn = b.node(), on = out.node(), batch,
                                             m, k, n] {
            const auto& g = on->grad;
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::size_t t = 0; t < batch; ++t) {
                const real* A = an->value.data() + t * static_cast<std::size_t>(m) * k;
                const real* B = bn->value.data() + t * static_cast<std::size_t>(k) * n;
                const real* G = g.data() + t * static_cast<std::size_t>(m) * n;
                if (an->requires_grad) {
                    real* GA = an->grad.data() + t * static_cast<std::size_t>(m) * k;
                    for (int i = 0; i < m; ++i)
                        for (int kk = 0; kk < k; ++kk) {
                            real s = 0;
                            const real* Grow = G + static_cast<std::size_t>(i) * n;
                            const real* Brow = B + static_cast<std::size_t>(kk) * n;
                            for (int j = 0; j < n; ++j) s += Grow[j] * Brow[j];
                            GA[static_cast<std::size_t>(i) * k + kk] += s;
                        }
                }
                if (bn->requires_grad) {
                    real* GB = bn->grad.data() + t * static_cast<std::size_t>(k) * n;
                    for (int kk = 0; kk < k; ++kk)
                        for (int i = 0; i < m; ++i) {
                            const real aik = A[static_cast<std::size_t>(i) * k + kk];
                            const real* Grow = G + static_cast<std::size_t>(i) * n;
                            real* GBrow = GB + static_cast<std::size_t>(kk) * n;
                            for (int j = 0; j < n; ++j) GBrow[j] += aik * Grow[j];
                        }
                }
            }
        });
    }
    return out;
}

// a @ b^T over the last two dims
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    std::size_t batch;
    int m, k, n;
    detail::matmul_dims(a, b, "matmul_nt", batch, m, k, n, true);
    std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<real> v(batch * static_cast<std::size_t>(m) * n);
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t t = 0; t < batch; ++t) {
        const real* A = pa + t * static_cast<std::size_t>(m) * k;
        const real* B = pb + t * static_cast<std::size_t>(n) * k;
        real* C = v.data() + t * static_cast<std::size_t>(m) * n;
        for (int i = 0; i < m; ++i) {
            const real* Arow = A + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < n; ++j) {
                const real* Brow = B + static_cast<std::size_t>(j) * k;
                real s = 0;
                for (int kk = 0; kk < k; ++kk) s += Arow[kk] * Brow[kk];
                C[static_cast<std::size_t>(i) * n + j] = s;
            }
        }
    }
    const bool track = detail::should_record({&a, &b});
    Tensor out = detail::make_output(std::move(out_shape), std::move(v), track, "matmul_nt");
    if (track) {
        Tape::active().record({out.node()}, [an = a.node(), bn = b.node(), on = out.node(), batch,
                                             m, k, n] {
            const auto& g = on->grad;
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::size_t t = 0; t < batch; ++t) {
                const real* A = an->value.data() + t * static_cast<std::size_t>(m) * k;
                const real* B = bn->value.data() + t * static_cast<std::size_t>(n) * k;
                const real* G = g.data() + t * static_cast<std::size_t>(m) * n;
                if (an->requires_grad) {
                    real* GA = an->grad.data() + t * static_cast<std::size_t>(m) * k;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) {
                            const real gij = G[static_cast<std::size_t>(i) * n + j];
                            const real* Brow = B + static_cast<std::size_t>(j) * k;
                            real* GArow = GA + static_cast<std::size_t>(i) * k;
                            for (int kk = 0; kk < k; ++kk) GArow[kk] += gij * Brow[kk];
                        }
                }
                if (bn->requires_grad) {
                    real* GB = bn->grad.data() + t * static_cast<std::size_t>(n) * k;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) {
                            const real gij = G[static_cast<std::size_t>(i) * n + j];
                            const real* Arow = A + static_cast<std::size_t>(i) * k;
                            real* GBrow = GB + static_cast<std::size_t>(j) * k;
                            for (int kk = 0; kk < k; ++kk) GBrow[kk] += gij * Arow[kk];
                        }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// neural-network layers
// ---------------------------------------------------------------------------

// weight [Cout,Cin,k,k], optional bias [Cout]; kernel/stride limited to the
// shapes the network actually uses (1x1 s1, 3x3 s1, 3x3 s2).
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                     int padding) {
    detail::require_rank4(x, "conv2d input");
    detail::require_rank4(weight, "conv2d weight");
    const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = weight.dim(0), k = weight.dim(2);
    require(weight.dim(2) == weight.dim(3), "conv2d: non-square kernel");
    require(weight.dim(1) == Ci, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                     " input channels, input has " + std::to_string(Ci));
    require((k == 1 && stride == 1) || (k == 3 && (stride == 1 || stride == 2)),
            "conv2d: unsupported kernel/stride " + std::to_string(k) + "/" + std::to_string(stride));
    require(padding >= 0, "conv2d: negative padding");
    const bool has_bias = bias.defined();
    if (has_bias) {
        require(bias.rank() == 1 && bias.dim(0) == Co,
                "conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                    std::to_string(Co) + " output channels");
    }
    const int Hp = H + 2 * padding, Wp = W + 2 * padding;
    const int Ho = (Hp - k) / stride + 1, Wo = (Wp - k) / stride + 1;
    require(Ho > 0 && Wo > 0, "conv2d: output would be empty for input " + shape_str(x.shape()));

    // zero-padded copy keeps the hot loops free of bounds checks
    std::vector<real> xp(static_cast<std::size_t>(B) * Ci * Hp * Wp, 0.0);
    {
        const real* px = x.data();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < Ci; ++c)
                for (int h = 0; h < H; ++h) {
                    const real* src = px + ((static_cast<std::size_t>(b) * Ci + c) * H + h) * W;
                    real* dst = xp.data() +
                                ((static_cast<std::size_t>(b) * Ci + c) * Hp + h + padding) * Wp +
                                padding;
                    std::copy(src, src + W, dst);
                }
    }

    std::vector<real> v(static_cast<std::size_t>(B) * Co * Ho * Wo);
    const real* pw = weight.data();
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            const real bval = has_bias ? bias.data()[co] : 0.0;
            real* outp = v.data() + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
            for (int ho = 0; ho < Ho; ++ho) {
                for (int wo = 0; wo < Wo; ++wo) {
                    real s = bval;
                    const int hi = ho * stride, wi = wo * stride;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const real* xrow =
                            xp.data() + ((static_cast<std::size_t>(b) * Ci + ci) * Hp + hi) * Wp + wi;
                        const real* wrow =
                            pw + ((static_cast<std::size_t>(co) * Ci + ci) * k) * k;
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) s += xrow[kw] * wrow[kw];
                            xrow += Wp;
                            wrow += k;
                        }
                    }
                    outp[static_cast<std::size_t>(ho) * Wo + wo] = s;
                }
            }
        }
    }
    const bool track = has_bias ? detail::should_record({&x, &weight, &bias})
                                : detail::should_record({&x, &weight});
    Tensor out = detail::make_output({B, Co, Ho, Wo}, std::move(v), track, "conv2d");
    if (track) {
        NodePtr bias_node = has_bias ? bias.node() : nullptr;
        Tape::active().record(
            {out.node()},
            [xn = x.node(), wn = weight.node(), bias_node, on = out.node(),
             xp = std::make_shared<std::vector<real>>(std::move(xp)), B, Ci, Co, H, W, Hp, Wp, Ho,
             Wo, k, stride, padding] {
                const auto& g = on->grad;
                const bool need_x = xn->requires_grad;
                const bool need_w = wn->requires_grad;
                const bool need_b = bias_node && bias_node->requires_grad;
                if (need_x) xn->ensure_grad();
                if (need_w) wn->ensure_grad();
                if (need_b) bias_node->ensure_grad();
                std::vector<real> gxp;
                if (need_x) gxp.assign(xp->size(), 0.0);
                for (int b = 0; b < B; ++b) {
                    for (int co = 0; co < Co; ++co) {
                        const real* gout =
                            g.data() + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                        if (need_b) {
                            real s = 0;
                            for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i)
                                s += gout[i];
                            bias_node->grad[co] += s;
                        }
                        for (int ho = 0; ho < Ho; ++ho) {
                            for (int wo = 0; wo < Wo; ++wo) {
                                const real gv = gout[static_cast<std::size_t>(ho) * Wo + wo];
                                if (gv == 0.0) continue;
                                const int hi = ho * stride, wi = wo * stride;
                                for (int ci = 0; ci < Ci; ++ci) {
                                    const std::size_t xbase =
                                        ((static_cast<std::size_t>(b) * Ci + ci) * Hp + hi) * Wp +
                                        wi;
                                    const std::size_t wbase =
                                        (static_cast<std::size_t>(co) * Ci + ci) *
                                        static_cast<std::size_t>(k) * k;
                                    for (int kh = 0; kh < k; ++kh) {
                                        for (int kw = 0; kw < k; ++kw) {
                                            const std::size_t xi =
                                                xbase + static_cast<std::size_t>(kh) * Wp + kw;
                                            if (need_w)
                                                wn->grad[wbase + static_cast<std::size_t>(kh) * k +
                                                         kw] += gv * (*xp)[xi];
                                            if (need_x) gxp[xi] += gv * wn->value[wbase +
                                                                                  static_cast<std::size_t>(
                                                                                      kh) *
                                                                                      k +
                                                                                  kw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if (need_x) {
                    for (int b = 0; b < B; ++b)
                        for (int c = 0; c < Ci; ++c)
                            for (int h = 0; h < H; ++h) {
                                const real* src =
                                    gxp.data() +
                                    ((static_cast<std::size_t>(b) * Ci + c) * Hp + h + padding) *
                                        Wp +
                                    padding;
                                real* dst = xn->grad.data() +
                                            ((static_cast<std::size_t>(b) * Ci + c) * H + h) * W;
                                for (int w = 0; w < W; ++w) dst[w] += src[w];
                            }
                }
            });
    }
    return out;
}

inline int same_padding(int kernel) { return kernel / 2; }

// per-token normalization over the channel dim of [B,C,H,W]
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         real eps = 1e-5) {
    detail::require_rank4(x, "layer_norm");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(gain.rank() == 1 && gain.dim(0) == C, "layer_norm: gain shape mismatch");
    require(bias.rank() == 1 && bias.dim(0) == C, "layer_norm: bias shape mismatch");
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<real> v(x.size());
    // cache per-token stats for the backward pass
    auto mu = std::make_shared<std::vector<real>>(static_cast<std::size_t>(B) * plane);
    auto inv_std = std::make_shared<std::vector<real>>(static_cast<std::size_t>(B) * plane);
    const real* px = x.data();
    const real* pg = gain.data();
    const real* pb = bias.data();
    for (int b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < plane; ++t) {
            real m = 0;
            for (int c = 0; c < C; ++c) m += px[(static_cast<std::size_t>(b) * C + c) * plane + t];
            m /= C;
            real var = 0;
            for (int c = 0; c < C; ++c) {
                const real d = px[(static_cast<std::size_t>(b) * C + c) * plane + t] - m;
                var += d * d;
            }
            var /= C;
            const real is = 1.0 / std::sqrt(var + eps);
            (*mu)[static_cast<std::size_t>(b) * plane + t] = m;
            (*inv_std)[static_cast<std::size_t>(b) * plane + t] = is;
            for (int c = 0; c < C; ++c) {
                const std::size_t i = (static_cast<std::size_t>(b) * C + c) * plane + t;
                v[i] = pg[c] * (px[i] - m) * is + pb[c];
            }
        }
    }
    const bool track = detail::should_record({&x, &gain, &bias});
    Tensor out = detail::make_output(x.shape(), std::move(v), track, "layer_norm");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), gn = gain.node(), bn = bias.node(),
                                             on = out.node(), mu, inv_std, B, C, plane] {
            const auto& g = on->grad;
            const bool need_x = xn->requires_grad;
            const bool need_g = gn->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_x) xn->ensure_grad();
            if (need_g) gn->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (int b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < plane; ++t) {
                    const real m = (*mu)[static_cast<std::size_t>(b) * plane + t];
                    const real is = (*inv_std)[static_cast<std::size_t>(b) * plane + t];
                    real sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t i = (static_cast<std::size_t>(b) * C + c) * plane + t;
                        const real xhat = (xn->value[i] - m) * is;
                        const real dxhat = g[i] * gn->value[c];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        if (need_g) gn->grad[c] += g[i] * xhat;
                        if (need_b) bn->grad[c] += g[i];
                    }
                    if (need_x) {
                        for (int c = 0; c < C; ++c) {
                            const std::size_t i = (static_cast<std::size_t>(b) * C + c) * plane + t;
                            const real xhat = (xn->value[i] - m) * is;
                            const real dxhat = g[i] * gn->value[c];
                            xn->grad[i] +=
                                is * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / C);
                        }
                    }
                }
            }
        });
    }
    return out;
}

// non-overlapping mean pooling; window must divide the spatial dims
inline Tensor avg_pool(const Tensor& x, int wh, int ww) {
    detail::require_rank4(x, "avg_pool");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(wh > 0 && ww > 0 && H % wh == 0 && W % ww == 0,
            "avg_pool: window " + std::to_string(wh) + "x" + std::to_string(ww) +
                " does not divide " + shape_str(x.shape()));
    const int Ho = H / wh, Wo = W / ww;
    const real inv = 1.0 / (static_cast<real>(wh) * ww);
    std::vector<real> v(static_cast<std::size_t>(B) * C * Ho * Wo);
    const real* px = x.data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    real s = 0;
                    for (int dh = 0; dh < wh; ++dh) {
                        const real* row = px + ((static_cast<std::size_t>(b) * C + c) * H +
                                                ho * wh + dh) *
                                                   W +
                                          wo * ww;
                        for (int dw = 0; dw < ww; ++dw) s += row[dw];
                    }
                    v[((static_cast<std::size_t>(b) * C + c) * Ho + ho) * Wo + wo] = s * inv;
                }
    const bool track = detail::should_record({&x});
    Tensor out = detail::make_output({B, C, Ho, Wo}, std::move(v), track, "avg_pool");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), on = out.node(), B, C, H, W, Ho, Wo,
                                             wh, ww, inv] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int ho = 0; ho < Ho; ++ho)
                        for (int wo = 0; wo < Wo; ++wo) {
                            const real g =
                                on->grad[((static_cast<std::size_t>(b) * C + c) * Ho + ho) * Wo +
                                         wo] *
                                inv;
                            for (int dh = 0; dh < wh; ++dh) {
                                real* row = xn->grad.data() +
                                            ((static_cast<std::size_t>(b) * C + c) * H + ho * wh +
                                             dh) *
                                                W +
                                            wo * ww;
                                for (int dw = 0; dw < ww; ++dw) row[dw] += g;
                            }
                        }
        });
    }
    return out;
}

inline Tensor global_avg_pool(const Tensor& x) {
    detail::require_rank4(x, "global_avg_pool");
    return avg_pool(x, x.dim(2), x.dim(3));
}

inline Tensor downsample2x(const Tensor& x) { return avg_pool(x, 2, 2); }

// reflect-pad bottom/right so H and W become multiples of m
inline Tensor pad_to_multiple(const Tensor& x, int m) {
    detail::require_rank4(x, "pad_to_multiple");
    require(m >= 1, "pad_to_multiple: modulus must be positive");
    const int H = x.dim(2), W = x.dim(3);
    const int pb = (m - H % m) % m;
    const int pr = (m - W % m) % m;
    return pad_reflect(x, 0, pb, 0, pr);
}

// x[B,C,H,W] * w[B,C,1,1], broadcasting over the spatial plane
inline Tensor scale_channels(const Tensor& x, const Tensor& w) {
    detail::require_rank4(x, "scale_channels");
    detail::require_rank4(w, "scale_channels weight");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(w.dim(0) == B && w.dim(1) == C && w.dim(2) == 1 && w.dim(3) == 1,
            "scale_channels: weight shape " + shape_str(w.shape()) + " does not match " +
                shape_str(x.shape()));
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<real> v(x.size());
    const real* px = x.data();
    const real* pw = w.data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const real s = pw[static_cast<std::size_t>(b) * C + c];
            const real* src = px + (static_cast<std::size_t>(b) * C + c) * plane;
            real* dst = v.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s;
        }
    const bool track = detail::should_record({&x, &w});
    Tensor out = detail::make_output(x.shape(), std::move(v), track, "scale_channels");
    if (track) {
        Tape::active().record({out.node()}, [xn = x.node(), wn = w.node(), on = out.node(), B, C,
                                             plane] {
            const auto& g = on->grad;
            if (xn->requires_grad) xn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * C + c) * plane;
                    const real s = wn->value[static_cast<std::size_t>(b) * C + c];
                    if (xn->requires_grad) {
                        for (std::size_t i = 0; i < plane; ++i) xn->grad[off + i] += g[off + i] * s;
                    }
                    if (wn->requires_grad) {
                        real acc = 0;
                        for (std::size_t i = 0; i < plane; ++i)
                            acc += g[off + i] * xn->value[off + i];
                        wn->grad[static_cast<std::size_t>(b) * C + c] += acc;
                    }
                }
        });
    }
    return out;
}

} // namespace sfsnid
