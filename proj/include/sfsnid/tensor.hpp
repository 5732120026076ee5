#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sfsnid/common.hpp"
#include "sfsnid/rng.hpp"

namespace sfsnid {

struct TensorNode {
    std::vector<int> shape;
    std::vector<real> value;
    std::vector<real> grad; // empty until gradient flow reaches this node
    bool requires_grad = false;
    bool leaf = true;

    std::size_t size() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }

    bool has_grad() const { return !grad.empty(); }
};

using NodePtr = std::shared_ptr<TensorNode>;

// Value-semantics handle to a node in the computation graph. Copying a
// Tensor aliases the underlying buffer; forward values are immutable by
// convention once a node has been consumed by another op.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor from(std::vector<int> shape, std::vector<real> values, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        require(numel(shape) == values.size(),
                "tensor data length " + std::to_string(values.size()) +
                " does not match shape " + shape_str(shape));
        n->shape = std::move(shape);
        n->value = std::move(values);
        n->requires_grad = requires_grad;
        if (requires_grad) n->ensure_grad();
        return Tensor(std::move(n));
    }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        std::vector<real> v(numel(shape), 0.0);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor full(std::vector<int> shape, real fill, bool requires_grad = false) {
        std::vector<real> v(numel(shape), fill);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(real v) { return from({1}, {v}); }

    // uniform in [-bound, bound], the init used for all learned weights
    static Tensor uniform(std::vector<int> shape, real bound, Rng& rng, bool requires_grad = true) {
        std::vector<real> v(numel(shape));
        for (auto& x : v) x = rng.uniform(-bound, bound);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor random(std::vector<int> shape, Rng& rng, real lo = 0.0, real hi = 1.0,
                         bool requires_grad = false) {
        std::vector<real> v(numel(shape));
        for (auto& x : v) x = rng.uniform(lo, hi);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const NodePtr& node() const { return node_; }

    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->value.size(); }

    std::vector<real>& values() { return node_->value; }
    const std::vector<real>& values() const { return node_->value; }
    real* data() { return node_->value.data(); }
    const real* data() const { return node_->value.data(); }

    bool requires_grad() const { return node_->requires_grad; }
    std::vector<real>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<real>& grad() const {
        require(node_->has_grad(), "tensor has no gradient buffer");
        return node_->grad;
    }
    void zero_grad() {
        if (node_->has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    real item() const {
        require(size() == 1, "item() requires a scalar tensor, got " + shape_str(shape()));
        return node_->value[0];
    }

    // flat index into [B,C,H,W]
    real at4(int b, int c, int h, int w) const {
        const auto& s = node_->shape;
        return node_->value[((static_cast<std::size_t>(b) * s[1] + c) * s[2] + h) * s[3] + w];
    }

    Tensor detached() const {
        auto n = std::make_shared<TensorNode>();
        n->shape = node_->shape;
        n->value = node_->value;
        return Tensor(std::move(n));
    }

private:
    NodePtr node_;
};

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Ordered record of executed differentiable ops. Record order is a
// topological order of the graph, so replaying entries back to front visits
// each op exactly once after all of its consumers.
class Tape {
public:
    static Tape& active() {
        thread_local Tape tape;
        return tape;
    }

    void record(std::vector<NodePtr> outputs, std::function<void()> backward_fn) {
        require(!consumed_, "tape already consumed by backward(); call reset() first");
        entries_.push_back(Entry{std::move(outputs), std::move(backward_fn)});
    }

    void backward(const Tensor& loss) {
        require(!consumed_, "backward() called twice without reset()");
        require(!entries_.empty(), "backward() on an empty tape");
        require(loss.size() == 1, "backward() requires a scalar loss, got " + shape_str(loss.shape()));
        require(loss.requires_grad(), "loss does not require grad; nothing to differentiate");
        loss.node()->ensure_grad();
        loss.node()->grad[0] = 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            bool live = false;
            for (const auto& out : it->outputs) {
                if (out->has_grad()) { live = true; break; }
            }
            if (live) it->fn();
        }
        consumed_ = true;
    }

    void reset() {
        entries_.clear();
        consumed_ = false;
    }

    std::size_t op_count() const { return entries_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Entry {
        std::vector<NodePtr> outputs;
        std::function<void()> fn;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

inline void backward(const Tensor& loss) { Tape::active().backward(loss); }

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

// Forward outputs must stay finite; a NaN/Inf is reported at the op that
// produced it rather than surfacing later as a corrupted loss.
inline void check_finite(const Tensor& t, const char* op) {
    for (real v : t.values()) {
        if (!std::isfinite(v)) {
            fail(std::string(op) + " produced a non-finite value");
        }
    }
}

inline Tensor make_output(std::vector<int> shape, std::vector<real> values, bool track,
                          const char* op) {
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    check_finite(out, op);
    if (track) {
        out.node()->requires_grad = true;
        out.node()->leaf = false;
    }
    return out;
}

} // namespace detail

} // namespace sfsnid
