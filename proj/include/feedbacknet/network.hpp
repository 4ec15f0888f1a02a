#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "feedbacknet/convlstm.hpp"
#include "feedbacknet/ops.hpp"
#include "feedbacknet/optim.hpp"

namespace fbnet {

/// Where the temporal skip H^d_{t-n} enters the unrolled graph.
///   OutputAdd: added to module d's output before it feeds module d+1.
///   StateAdd:  added to the recurrent hidden input of module d's gates.
enum class SkipMode { OutputAdd, StateAdd };

struct StemSpec {
    int in_channels = 3;
    int out_channels = 16;
    int kernel = 3;
    int stride = 1;
};

/// Full architecture description of a feedback network: stem, ordered
/// ConvLSTM modules, unroll length T, temporal skip, loss discount, and the
/// pooled classifier head (shared across iterations).
struct FeedbackNetSpec {
    StemSpec stem;
    std::vector<GateStackSpec> modules;
    int iterations = 4; // T
    bool skip_enabled = true;
    int skip_n = 2;
    SkipMode skip_mode = SkipMode::OutputAdd;
    double gamma = 1.0;
    int num_classes = 12;

    int physical_depth() const {
        int d = 0;
        for (const auto& m : modules) d += m.depth;
        return d;
    }
    int virtual_depth() const { return physical_depth() * iterations; }
    int feature_channels() const { return modules.back().out_channels; }

    void validate() const {
        if (modules.empty()) throw ConfigError("feedback net needs at least one module");
        if (iterations < 1) throw ConfigError("feedback net iterations must be >= 1");
        if (gamma < 0.0 || gamma > 1.0)
            throw ConfigError(detail::concat("gamma must be in [0,1], got ", gamma));
        if (num_classes < 2) throw ConfigError("feedback net needs >= 2 classes");
        if (skip_enabled && skip_n < 1)
            throw ConfigError("skip_n = 0 would add a state to its own output; use skip_n >= 1 or disable skips");
        int ch = stem.out_channels;
        for (std::size_t i = 0; i < modules.size(); ++i) {
            modules[i].validate();
            if (modules[i].in_channels != ch)
                throw ConfigError(detail::concat("module ", i, " expects ", modules[i].in_channels,
                                                 " input channels but receives ", ch));
            ch = modules[i].out_channels;
        }
    }

    /// Stable one-line description; hashed into the checkpoint fingerprint.
    std::string canonical() const {
        std::string s = detail::concat("stem:", stem.in_channels, ">", stem.out_channels, "k", stem.kernel,
                                        "s", stem.stride, ";T=", iterations, ";skip=",
                                        skip_enabled ? skip_n : 0,
                                        skip_mode == SkipMode::OutputAdd ? "o" : "h", ";gamma=", gamma,
                                        ";K=", num_classes);
        for (const auto& m : modules)
            s += detail::concat(";it(", m.in_channels, ",", m.out_channels, ",", m.kernel, ",", m.stride,
                                ",", m.depth, m.residual ? ",r" : "", ")");
        return s;
    }
};

/// Per-iteration outputs of one unrolled forward pass.
template <typename S>
struct IterationTraceT {
    std::vector<TensorT<S>> logits; // T entries of [N,K]
    std::vector<TensorT<S>> losses; // T scalar tensors
    std::vector<TensorT<S>> pooled; // T entries of [N,F]
    TensorT<S> total;               // combined loss, set by the chosen objective
};

using IterationTrace = IterationTraceT<float>;

/// Eq-style discounted sum over iteration losses: sum_t gamma^t * L_t with
/// t starting at 1.
template <typename S>
TensorT<S> total_loss(const IterationTraceT<S>& trace, double gamma) {
    if (trace.losses.empty()) throw ContractError("total_loss on an empty trace");
    TensorT<S> acc = scale(trace.losses[0], gamma);
    double w = gamma;
    for (std::size_t t = 1; t < trace.losses.size(); ++t) {
        w *= gamma;
        acc = add(acc, scale(trace.losses[t], w));
    }
    return acc;
}

template <typename S>
class FeedbackNetT {
public:
    static FeedbackNetT init(const FeedbackNetSpec& spec, Rng& rng) {
        spec.validate();
        FeedbackNetT net;
        net.spec_ = spec;
        net.stem_ = ConvBnT<S>::init(spec.stem.in_channels, spec.stem.out_channels, spec.stem.kernel,
                                     spec.stem.stride, rng);
        for (std::size_t d = 0; d < spec.modules.size(); ++d)
            net.cells_.push_back(ConvLstmCellT<S>::init(spec.modules[d], static_cast<int>(d), rng));
        const int F = spec.feature_channels();
        const double bound = 1.0 / std::sqrt(static_cast<double>(F));
        net.fc_w_ = TensorT<S>::uniform({F, spec.num_classes}, bound, rng).set_requires_grad(true);
        net.fc_b_ = TensorT<S>::zeros({spec.num_classes}).set_requires_grad(true);
        return net;
    }

    const FeedbackNetSpec& spec() const { return spec_; }
    FeedbackNetSpec& spec() { return spec_; }

    /// Unrolls the network over T iterations. The image is re-injected at
    /// every iteration (via the shared stem output); hidden states start at
    /// zero; the temporal skip adds H^d_{t-n} per the spec's skip mode, with
    /// states at non-positive times taken as zero. Computes the fine
    /// cross-entropy loss at every iteration.
    IterationTraceT<S> forward(const TensorT<S>& images, const std::vector<int>& fine_targets, Mode mode) {
        const int T = spec_.iterations;
        const int n_mod = static_cast<int>(cells_.size());
        const bool skip =
            spec_.skip_enabled && spec_.skip_n >= 1 && spec_.skip_n < T;

        IterationTraceT<S> trace;
        TensorT<S> stem_out = relu(stem_.forward(images, mode, 0));
        std::vector<CellStateT<S>> state(n_mod);
        std::vector<std::vector<TensorT<S>>> history(n_mod); // history[d][t] = H^d at iteration t

        for (int t = 0; t < T; ++t) {
            TensorT<S> x = stem_out;
            for (int d = 0; d < n_mod; ++d) {
                CellStateT<S> st = state[d];
                if (skip && spec_.skip_mode == SkipMode::StateAdd && t >= spec_.skip_n && st.defined())
                    st.h = add(st.h, history[d][t - spec_.skip_n]);
                auto [out, next] = cells_[d].step(x, st, mode, t);
                state[d] = next;
                history[d].push_back(next.h);
                x = out;
                if (skip && spec_.skip_mode == SkipMode::OutputAdd && t >= spec_.skip_n && d + 1 < n_mod)
                    x = add(x, history[d][t - spec_.skip_n]);
            }
            TensorT<S> pooled = reshape(avg_pool(x, x.dim(2), 1), {x.dim(0), x.dim(1)});
            TensorT<S> logits = fully_connected(pooled, fc_w_, fc_b_);
            TensorT<S> loss = softmax_cross_entropy(logits, fine_targets);
            if (!std::isfinite(static_cast<double>(loss.data()[0])))
                throw NumericError(detail::concat("non-finite loss at iteration ", t + 1));
            trace.pooled.push_back(pooled);
            trace.logits.push_back(logits);
            trace.losses.push_back(loss);
        }
        return trace;
    }

    ParamList<S> params() {
        ParamList<S> out;
        stem_.collect_params("stem", out);
        for (std::size_t d = 0; d < cells_.size(); ++d)
            cells_[d].collect_params("mod" + std::to_string(d), out);
        out.push_back({"head.w", fc_w_});
        out.push_back({"head.b", fc_b_});
        return out;
    }

    std::vector<std::pair<std::string, std::vector<BnStats<S>>*>> bn_state() {
        std::vector<std::pair<std::string, std::vector<BnStats<S>>*>> out;
        stem_.collect_bn("stem", out);
        for (std::size_t d = 0; d < cells_.size(); ++d)
            cells_[d].collect_bn("mod" + std::to_string(d), out);
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.tensor.size();
        return n;
    }

    std::vector<ConvLstmCellT<S>>& cells() { return cells_; }
    ConvBnT<S>& stem() { return stem_; }
    TensorT<S>& head_weight() { return fc_w_; }
    TensorT<S>& head_bias() { return fc_b_; }

private:
    FeedbackNetSpec spec_;
    ConvBnT<S> stem_;
    std::vector<ConvLstmCellT<S>> cells_;
    TensorT<S> fc_w_, fc_b_;
};

using FeedbackNet = FeedbackNetT<float>;

/// Spec-level alias: unrolled forward pass producing the iteration trace.
template <typename S>
IterationTraceT<S> unroll_forward(FeedbackNetT<S>& net, const TensorT<S>& images,
                                  const std::vector<int>& fine_targets, Mode mode) {
    return net.forward(images, fine_targets, mode);
}

/// Returns a copy of the spec whose training objective is the last
/// iteration's loss only (the recurrent-feedforward ablation). The
/// architecture is unchanged.
inline FeedbackNetSpec recurrent_feedforward_mode(FeedbackNetSpec spec) {
    spec.validate();
    return spec; // the harness selects the last-iteration objective via TrainConfig
}

/// Plain feedforward baseline: stem, then two channel stages of Conv+BN+ReLU
/// layers (first layer of each stage strided), optionally with identity
/// residual connections around the stride-1 layers. A pooling->FC head sits
/// at the endpoint; auxiliary heads can be attached at any depth.
struct FeedforwardSpec {
    int depth = 8; // conv layers after the stem; must be even
    bool residual = true;
    std::vector<int> aux_head_depths;
    int num_classes = 12;
    int stem_channels = 16;
    int mid_channels = 32;
    int late_channels = 64;

    void validate() const {
        if (depth < 2 || depth % 2 != 0)
            throw ConfigError(detail::concat("feedforward depth must be even and >= 2, got ", depth));
        for (int d : aux_head_depths)
            if (d < 1 || d > depth)
                throw ConfigError(detail::concat("aux head depth ", d, " outside [1,", depth, "]"));
        if (num_classes < 2) throw ConfigError("feedforward net needs >= 2 classes");
    }

    int channels_at(int layer) const { return layer <= depth / 2 ? mid_channels : late_channels; }
};

template <typename S>
class FeedforwardNetT {
public:
    struct Head {
        TensorT<S> w, b;
    };

    static FeedforwardNetT init(const FeedforwardSpec& spec, Rng& rng) {
        spec.validate();
        FeedforwardNetT net;
        net.spec_ = spec;
        net.stem_ = ConvBnT<S>::init(3, spec.stem_channels, 3, 1, rng);
        int ch = spec.stem_channels;
        for (int l = 1; l <= spec.depth; ++l) {
            const int out = spec.channels_at(l);
            const int stride = (l == 1 || l == spec.depth / 2 + 1) ? 2 : 1;
            net.layers_.push_back(ConvBnT<S>::init(ch, out, 3, stride, rng));
            ch = out;
        }
        net.endpoint_ = make_head(spec.late_channels, spec.num_classes, rng);
        return net;
    }

    const FeedforwardSpec& spec() const { return spec_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    /// Endpoint logits.
    TensorT<S> forward(const TensorT<S>& images, Mode mode) {
        return head_logits(endpoint_, features(images, mode, spec_.depth));
    }

    /// Representation after `depth` conv layers (depth 0 = stem output).
    TensorT<S> features(const TensorT<S>& images, Mode mode, int depth) {
        TensorT<S> x = relu(stem_.forward(images, mode, 0));
        for (int l = 1; l <= depth; ++l) {
            TensorT<S> y = layers_[l - 1].forward(x, mode, 0);
            const bool same_shape = y.shape() == x.shape();
            x = relu(spec_.residual && same_shape ? add(y, x) : y);
        }
        return x;
    }

    /// Logits from every requested depth: the endpoint head at depth D,
    /// an attached auxiliary head otherwise.
    std::vector<TensorT<S>> forward_heads(const TensorT<S>& images, Mode mode, const std::vector<int>& depths) {
        std::vector<TensorT<S>> out;
        TensorT<S> x = relu(stem_.forward(images, mode, 0));
        int next = 0;
        std::vector<int> sorted = depths;
        for (std::size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i] < sorted[i - 1]) throw ContractError("head depths must be sorted ascending");
        for (int l = 1; l <= spec_.depth && next < static_cast<int>(sorted.size()); ++l) {
            TensorT<S> y = layers_[l - 1].forward(x, mode, 0);
            const bool same_shape = y.shape() == x.shape();
            x = relu(spec_.residual && same_shape ? add(y, x) : y);
            while (next < static_cast<int>(sorted.size()) && sorted[next] == l) {
                out.push_back(head_logits(head_at(l), x));
                ++next;
            }
        }
        return out;
    }

    /// An attached auxiliary head wins; the endpoint head answers for depth
    /// D when no auxiliary head was attached there.
    Head& head_at(int depth) {
        auto it = aux_heads_.find(depth);
        if (it != aux_heads_.end()) return it->second;
        if (depth == spec_.depth) return endpoint_;
        throw ContractError(detail::concat("no auxiliary head attached at depth ", depth));
    }

    /// Attaches a freshly initialized auxiliary head (also allowed at depth
    /// D, where it re-learns the classifier from the frozen representation).
    void attach_aux_head(int depth, Rng& rng) {
        if (depth < 1 || depth > spec_.depth)
            throw ContractError(detail::concat("aux head depth ", depth, " outside [1,", spec_.depth, "]"));
        aux_heads_[depth] = make_head(spec_.channels_at(depth), spec_.num_classes, rng);
    }

    ParamList<S> params() {
        ParamList<S> out;
        stem_.collect_params("stem", out);
        for (std::size_t l = 0; l < layers_.size(); ++l)
            layers_[l].collect_params("conv" + std::to_string(l + 1), out);
        out.push_back({"head.w", endpoint_.w});
        out.push_back({"head.b", endpoint_.b});
        return out;
    }

    ParamList<S> head_params(int depth) {
        Head& h = head_at(depth);
        return {{"auxhead" + std::to_string(depth) + ".w", h.w},
                {"auxhead" + std::to_string(depth) + ".b", h.b}};
    }

    /// Backbone = everything except auxiliary heads.
    void set_backbone_requires_grad(bool b) {
        for (auto& p : params()) p.tensor.set_requires_grad(b);
    }

private:
    static Head make_head(int features, int classes, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(features));
        Head h;
        h.w = TensorT<S>::uniform({features, classes}, bound, rng).set_requires_grad(true);
        h.b = TensorT<S>::zeros({classes}).set_requires_grad(true);
        return h;
    }

    TensorT<S> head_logits(Head& head, const TensorT<S>& rep) {
        TensorT<S> pooled = reshape(avg_pool(rep, rep.dim(2), 1), {rep.dim(0), rep.dim(1)});
        return fully_connected(pooled, head.w, head.b);
    }

    FeedforwardSpec spec_;
    ConvBnT<S> stem_;
    std::vector<ConvBnT<S>> layers_;
    Head endpoint_;
    std::map<int, Head> aux_heads_;
    bool trained_ = false;
};

using FeedforwardNet = FeedforwardNetT<float>;

/// Spec-level alias: per-head logits for the feedforward baseline.
template <typename S>
std::vector<TensorT<S>> feedforward_forward(FeedforwardNetT<S>& net, const TensorT<S>& images, Mode mode,
                                            const std::vector<int>& depths) {
    return net.forward_heads(images, mode, depths);
}

} // namespace fbnet
