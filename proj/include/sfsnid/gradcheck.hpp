#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sfsnid/rng.hpp"
#include "sfsnid/tensor.hpp"

namespace sfsnid {

// per_coordinate: worst |analytic - fd| / (|fd| + 1e-8) over single entries.
// group_norm: ||analytic - fd||_2 / (||fd||_2 + 1e-8) per input tensor; used
// for composite blocks, where an activation kink inside the h-window of one
// coordinate would otherwise dominate an elementwise comparison.
enum class FdCompare { per_coordinate, group_norm };

struct GradCheckOptions {
    real h = 1e-3;            // central-difference step
    real threshold = 1e-4;    // max allowed relative error (see FdCompare)
    FdCompare compare = FdCompare::per_coordinate;
    // Group-norm denominators get a floor of
    //   max(group_floor, group_floor_scale * max_g ||fd_g||).
    // A group whose gradient norm is orders of magnitude below the dominant
    // group's is zero at the fixture's scale; its finite differences are pure
    // evaluation noise (deep composites leave ~1e-12 of non-reproducible
    // rounding in the scalar, i.e. ~1e-8 in an h=1e-4 quotient), so comparing
    // it against its own norm measures the noise, not the backward rule. The
    // scaled floor compares it against the fixture's scale instead; a
    // misrouted or sign-flipped gradient still fails by a wide margin.
    real group_floor = 1e-6;
    real group_floor_scale = 1e-4;
    std::size_t dense_limit = 512;  // check all coordinates when the input total is below this
    std::size_t max_samples = 48;   // per-input sample count above dense_limit
    std::size_t global_budget = 0;  // >0: sample this many coordinates across ALL inputs instead
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

struct GradCheckReport {
    std::string name;
    real max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    real threshold = 0.0;
    bool passed = false;
};

// Fills every tensor with fresh uniform draws. Gradient-check fixtures use
// this on parameter bundles so that no pre-activation sits exactly on an
// activation kink (zero-initialized biases otherwise align with the
// structurally exact-zero spectrum bins of real inputs).
inline void fill_uniform(const std::vector<Tensor>& ts, Rng& rng, real lo, real hi) {
    for (const auto& t : ts) {
        for (auto& v : t.node()->value) v = rng.uniform(lo, hi);
    }
}

// Verifies the reverse-mode gradient of a scalar-valued function against
// central finite differences. `fn` must rebuild its graph from exactly the
// given leaves on every call; every leaf must have requires_grad set.
inline GradCheckReport check_gradients(const std::string& name,
                                       const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                       const std::vector<Tensor>& inputs,
                                       GradCheckOptions opt = {}) {
    require(!inputs.empty(), "check_gradients: no inputs for " + name);
    std::size_t total = 0;
    for (const auto& t : inputs) {
        require(t.requires_grad(), "check_gradients: input without requires_grad in " + name);
        total += t.size();
    }

    // analytic pass
    for (auto t : inputs) t.zero_grad();
    Tape::active().reset();
    Tensor loss = fn(inputs);
    backward(loss);
    std::vector<std::vector<real>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& t : inputs) {
        if (t.node()->has_grad()) {
            analytic.push_back(t.node()->grad);
        } else {
            analytic.emplace_back(t.size(), 0.0);
        }
    }
    Tape::active().reset();

    // finite-difference pass
    GradCheckReport rep;
    rep.name = name;
    rep.threshold = opt.threshold;
    NoGradGuard guard;
    Rng rng(opt.seed);

    // (input index, coordinate) pairs to probe, grouped per input
    std::vector<std::vector<std::size_t>> coords(inputs.size());
    if (opt.global_budget > 0) {
        const std::size_t n = std::min(opt.global_budget, total);
        for (std::size_t s = 0; s < n; ++s) {
            std::size_t flat = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
            std::size_t i = 0;
            while (flat >= inputs[i].size()) flat -= inputs[i++].size();
            coords[i].push_back(flat);
        }
    } else if (total <= opt.dense_limit) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            coords[i].resize(inputs[i].size());
            for (std::size_t j = 0; j < inputs[i].size(); ++j) coords[i][j] = j;
        }
    } else {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const std::size_t n = std::min(opt.max_samples, inputs[i].size());
            for (std::size_t s = 0; s < n; ++s) {
                coords[i].push_back(static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(inputs[i].size()) - 1)));
            }
        }
    }

    // under global sampling the whole probe set is one comparison group
    const bool one_group = opt.global_budget > 0;
    std::vector<real> group_diff_sq(one_group ? 1 : inputs.size(), 0.0);
    std::vector<real> group_fd_sq(one_group ? 1 : inputs.size(), 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<real>& v = inputs[i].node()->value;
        const std::size_t g = one_group ? 0 : i;
        for (std::size_t j : coords[i]) {
            const real orig = v[j];
            v[j] = orig + opt.h;
            const real f_plus = fn(inputs).item();
            v[j] = orig - opt.h;
            const real f_minus = fn(inputs).item();
            v[j] = orig;
            const real fd = (f_plus - f_minus) / (2.0 * opt.h);
            if (opt.compare == FdCompare::per_coordinate) {
                const real rel = std::fabs(analytic[i][j] - fd) / (std::fabs(fd) + 1e-8);
                if (rel > rep.max_rel_err) rep.max_rel_err = rel;
            } else {
                const real d = analytic[i][j] - fd;
                group_diff_sq[g] += d * d;
                group_fd_sq[g] += fd * fd;
            }
            ++rep.coords_checked;
        }
    }
    if (opt.compare == FdCompare::group_norm && rep.coords_checked > 0) {
        real max_norm = 0;
        for (real s : group_fd_sq) max_norm = std::max(max_norm, std::sqrt(s));
        const real floor = std::max(opt.group_floor, opt.group_floor_scale * max_norm);
        for (std::size_t g = 0; g < group_fd_sq.size(); ++g) {
            if (!one_group && coords[g].empty()) continue;
            const real rel = std::sqrt(group_diff_sq[g]) / (std::sqrt(group_fd_sq[g]) + floor);
            if (rel > rep.max_rel_err) rep.max_rel_err = rel;
        }
    }
    rep.passed = rep.max_rel_err < opt.threshold;
    return rep;
}

} // namespace sfsnid
