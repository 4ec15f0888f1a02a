#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "feedbacknet/common.hpp"
#include "feedbacknet/rng.hpp"

namespace fbnet {

namespace detail {

template <typename S>
struct TensorStorage {
    std::vector<int> shape;
    std::vector<S> values;
    std::vector<S> grad; // empty until first accumulation
    bool requires_grad = false;
};

} // namespace detail

/// N-dimensional array of scalars in row-major order with an optional
/// gradient buffer. Copying a TensorT copies the handle, not the payload;
/// the shape is fixed at creation.
template <typename S>
class TensorT {
public:
    using Scalar = S;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape) { return full(std::move(shape), S(0)); }

    static TensorT full(std::vector<int> shape, S v) {
        TensorT t;
        t.s_ = std::make_shared<detail::TensorStorage<S>>();
        std::size_t n = shape_numel(shape);
        t.s_->shape = std::move(shape);
        t.s_->values.assign(n, v);
        return t;
    }

    static TensorT from_data(std::vector<int> shape, std::vector<S> values) {
        if (shape_numel(shape) != values.size())
            throw ShapeError(detail::concat("data length ", values.size(), " does not match shape ",
                                            shape_str(shape)));
        TensorT t;
        t.s_ = std::make_shared<detail::TensorStorage<S>>();
        t.s_->shape = std::move(shape);
        t.s_->values = std::move(values);
        return t;
    }

    static TensorT scalar(S v) { return full({1}, v); }

    /// Uniform init in [-bound, bound] drawn from the given stream.
    static TensorT uniform(std::vector<int> shape, double bound, Rng& rng) {
        TensorT t = zeros(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i)
            t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
        return t;
    }

    bool defined() const { return s_ != nullptr; }
    const std::vector<int>& shape() const { return s_->shape; }
    int ndim() const { return static_cast<int>(s_->shape.size()); }
    int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return s_->values.size(); }

    S* data() { return s_->values.data(); }
    const S* data() const { return s_->values.data(); }
    std::vector<S>& values() { return s_->values; }
    const std::vector<S>& values() const { return s_->values; }

    S at(std::initializer_list<int> idx) const {
        std::size_t off = 0;
        std::size_t k = 0;
        for (int i : idx) off = off * static_cast<std::size_t>(s_->shape[k++]) + static_cast<std::size_t>(i);
        return s_->values[off];
    }

    bool requires_grad() const { return s_->requires_grad; }
    TensorT& set_requires_grad(bool b) {
        s_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !s_->grad.empty(); }

    /// Gradient buffer, allocated as zeros on first access.
    S* grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->values.size(), S(0));
        return s_->grad.data();
    }
    const S* grad_data() const { return s_->grad.empty() ? nullptr : s_->grad.data(); }

    void zero_grad() {
        if (!s_->grad.empty()) s_->grad.assign(s_->values.size(), S(0));
    }

    /// Identity of the underlying storage; used to match tensors across
    /// recorded operations.
    const void* key() const { return s_.get(); }

    /// Deep copy of values (gradients are not copied).
    TensorT clone() const {
        TensorT t = from_data(s_->shape, s_->values);
        t.s_->requires_grad = s_->requires_grad;
        return t;
    }

private:
    std::shared_ptr<detail::TensorStorage<S>> s_;
};

/// Ordered record of differentiable operations. Each node carries the
/// closure implementing its backward rule; nodes are appended in execution
/// order, so one reverse sweep visits every producer after its consumers.
template <typename S>
class TapeT {
public:
    struct Node {
        TensorT<S> output;
        std::function<void()> backward;
    };

    /// Installs a tape as the recording target for the current thread.
    class Scope {
    public:
        explicit Scope(TapeT& t) : prev_(active_slot()) { active_slot() = &t; }
        ~Scope() { active_slot() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        TapeT* prev_;
    };

    static TapeT* active() { return active_slot(); }

    void record(TensorT<S> output, std::function<void()> fn) {
        nodes_.push_back(Node{std::move(output), std::move(fn)});
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse, accumulating
    /// (+=) into the grad buffer of every tensor a recorded rule touches.
    /// Node outputs are sweep-local scratch and are cleared afterwards, so
    /// leaf gradients accumulate cleanly: a second sweep without zeroing
    /// doubles them.
    void backward(TensorT<S> root) {
        if (!root.defined() || root.size() != 1)
            throw ContractError("backward root must be a scalar tensor");
        bool on_tape = false;
        for (const Node& n : nodes_)
            if (n.output.key() == root.key()) {
                on_tape = true;
                break;
            }
        if (!on_tape) throw ContractError("backward root was not produced on this tape");
        root.grad()[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
        for (Node& n : nodes_) n.output.zero_grad();
    }

private:
    static TapeT*& active_slot() {
        thread_local TapeT* active = nullptr;
        return active;
    }

    std::vector<Node> nodes_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

} // namespace fbnet
