#pragma once

#include <string>
#include <vector>

#include "feedbacknet/tensor.hpp"

namespace fbnet {

template <typename S>
struct ParamRef {
    std::string name;
    TensorT<S> tensor;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

/// SGD with classical momentum and decoupled-from-nothing weight decay:
///   v <- momentum * v + (g + weight_decay * p)
///   p <- p - lr * v
/// Velocity buffers are owned here; gradients are left untouched so the
/// caller controls zeroing.
template <typename S>
class SgdT {
public:
    SgdT(ParamList<S> params, double lr, double momentum, double weight_decay)
        : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
        velocity_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i)
            velocity_[i].assign(params_[i].tensor.size(), S(0));
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            TensorT<S>& p = params_[i].tensor;
            const S* g = p.grad_data();
            S* v = velocity_[i].data();
            S* w = p.data();
            const S mu = static_cast<S>(momentum_), wd = static_cast<S>(weight_decay_),
                    lr = static_cast<S>(lr_);
            for (std::size_t j = 0; j < p.size(); ++j) {
                const S gj = (g ? g[j] : S(0)) + wd * w[j];
                v[j] = mu * v[j] + gj;
                w[j] -= lr * v[j];
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    const ParamList<S>& params() const { return params_; }
    std::vector<std::vector<S>>& velocities() { return velocity_; }
    const std::vector<std::vector<S>>& velocities() const { return velocity_; }

private:
    ParamList<S> params_;
    std::vector<std::vector<S>> velocity_;
    double lr_, momentum_, weight_decay_;
};

using Sgd = SgdT<float>;

} // namespace fbnet
