#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feedbacknet/ops.hpp"
#include "feedbacknet/optim.hpp"
#include "feedbacknet/rng.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbnet {

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEpsilon = 1e-5;

/// Shape of one gate function: `depth` Conv+BN layers, ReLU between layers
/// and none after the last, with an optional identity residual wrapped
/// around layers 2..depth. The first layer maps in->out channels at the
/// given stride; inner layers are out->out at stride 1.
struct GateStackSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int depth = 1;
    bool residual = false;

    void validate() const {
        if (in_channels < 1 || out_channels < 1)
            throw ConfigError("gate stack channels must be positive");
        if (kernel < 1 || kernel % 2 == 0)
            throw ConfigError(detail::concat("gate stack kernel must be a positive odd int, got ", kernel));
        if (stride < 1) throw ConfigError("gate stack stride must be positive");
        if (depth < 1) throw ConfigError("gate stack depth must be >= 1");
    }
};

/// Conv + BatchNorm unit. Batchnorm affine parameters are shared across
/// time; running statistics are kept per time step, with eval falling back
/// to the last populated step when asked beyond the training horizon.
template <typename S>
struct ConvBnT {
    TensorT<S> weight, bias, gamma, beta;
    std::vector<BnStats<S>> stats;
    int stride = 1;
    int pad = 0;

    static ConvBnT init(int in_ch, int out_ch, int kernel, int stride, Rng& rng) {
        ConvBnT l;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel * kernel);
        l.weight = TensorT<S>::uniform({out_ch, in_ch, kernel, kernel}, bound, rng).set_requires_grad(true);
        l.bias = TensorT<S>::zeros({out_ch}).set_requires_grad(true);
        l.gamma = TensorT<S>::full({out_ch}, S(1)).set_requires_grad(true);
        l.beta = TensorT<S>::zeros({out_ch}).set_requires_grad(true);
        l.stride = stride;
        l.pad = kernel / 2;
        return l;
    }

    TensorT<S> forward(const TensorT<S>& x, Mode mode, int step) {
        return batchnorm(conv2d(x, weight, bias, stride, pad), gamma, beta, stats_for(mode, step), mode,
                         kBnMomentum, kBnEpsilon);
    }

    BnStats<S>& stats_for(Mode mode, int step) {
        if (mode == Mode::Train) {
            if (static_cast<int>(stats.size()) <= step) stats.resize(step + 1);
            return stats[step];
        }
        if (stats.empty()) stats.emplace_back();
        int idx = std::min<int>(step, static_cast<int>(stats.size()) - 1);
        while (idx > 0 && !stats[idx].initialized()) --idx;
        return stats[idx];
    }

    void collect_params(const std::string& prefix, ParamList<S>& out) {
        out.push_back({prefix + ".w", weight});
        out.push_back({prefix + ".b", bias});
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }

    void collect_bn(const std::string& prefix, std::vector<std::pair<std::string, std::vector<BnStats<S>>*>>& out) {
        out.push_back({prefix + ".bn", &stats});
    }
};

/// One gate function of the cell: a stack of Conv+BN layers.
template <typename S>
struct GateStackT {
    GateStackSpec spec;
    std::vector<ConvBnT<S>> layers;

    static GateStackT init(const GateStackSpec& spec, Rng& rng) {
        spec.validate();
        GateStackT g;
        g.spec = spec;
        g.layers.push_back(ConvBnT<S>::init(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, rng));
        for (int l = 1; l < spec.depth; ++l)
            g.layers.push_back(ConvBnT<S>::init(spec.out_channels, spec.out_channels, spec.kernel, 1, rng));
        return g;
    }

    TensorT<S> forward(const TensorT<S>& x, Mode mode, int step) {
        if (x.dim(1) != spec.in_channels)
            throw ShapeError(detail::concat("gate stack expects ", spec.in_channels, " input channels, got ",
                                            shape_str(x.shape())));
        TensorT<S> first = layers[0].forward(x, mode, step);
        if (spec.depth == 1) return first;
        TensorT<S> inner = first;
        for (int l = 1; l < spec.depth; ++l) inner = layers[l].forward(relu(inner), mode, step);
        return spec.residual ? add(inner, first) : inner;
    }

    void collect_params(const std::string& prefix, ParamList<S>& out) {
        for (std::size_t l = 0; l < layers.size(); ++l)
            layers[l].collect_params(prefix + ".l" + std::to_string(l), out);
    }

    void collect_bn(const std::string& prefix, std::vector<std::pair<std::string, std::vector<BnStats<S>>*>>& out) {
        for (std::size_t l = 0; l < layers.size(); ++l)
            layers[l].collect_bn(prefix + ".l" + std::to_string(l), out);
    }
};

/// Recurrent state of one ConvLSTM module. Default-constructed state means
/// "all zeros" and is materialized on first use.
template <typename S>
struct CellStateT {
    TensorT<S> h, c;
    bool defined() const { return h.defined(); }
};

/// Test hook: forces a gate to a constant activation value.
struct GateClamp {
    std::optional<double> input_gate, forget_gate, output_gate;
    bool any() const { return input_gate || forget_gate || output_gate; }
};

/// ConvLSTM module: eight gate stacks implementing
///   i = sig(Wxi(X) + Whi(H)),  f = sig(Wxf(X) + Whf(H)),
///   c~ = tanh(Wxc(X) + Whc(H)), C' = f.C + i.c~,
///   o = sig(Wxo(X) + Who(H)),  H' = o.tanh(C'),  X_out = H'.
/// The X-side stacks apply the spec stride in their first layer; the H-side
/// stacks are stride 1 throughout. Weights are shared across iterations.
template <typename S>
struct ConvLstmCellT {
    GateStackSpec spec;
    int depth_index = 0; // position in the network, for error messages
    GateStackT<S> xi, hi, xf, hf, xc, hc, xo, ho;

    static ConvLstmCellT init(const GateStackSpec& spec, int depth_index, Rng& rng) {
        ConvLstmCellT cell;
        cell.spec = spec;
        cell.depth_index = depth_index;
        GateStackSpec hspec = spec;
        hspec.in_channels = spec.out_channels;
        hspec.stride = 1;
        cell.xi = GateStackT<S>::init(spec, rng);
        cell.hi = GateStackT<S>::init(hspec, rng);
        cell.xf = GateStackT<S>::init(spec, rng);
        cell.hf = GateStackT<S>::init(hspec, rng);
        cell.xc = GateStackT<S>::init(spec, rng);
        cell.hc = GateStackT<S>::init(hspec, rng);
        cell.xo = GateStackT<S>::init(spec, rng);
        cell.ho = GateStackT<S>::init(hspec, rng);
        // Forget-gate bias: nudge the input-side stack's final shift so f
        // starts near sigmoid(1). The conv bias itself would be cancelled by
        // the batchnorm that follows it, so the shift lives in BN beta.
        auto& last = cell.xf.layers.back();
        for (std::size_t j = 0; j < last.beta.size(); ++j) last.beta.data()[j] = S(1);
        last.bias = TensorT<S>::full(last.bias.shape(), S(1)).set_requires_grad(true);
        return cell;
    }

    std::vector<int> state_shape(const TensorT<S>& x) const {
        const int hs = (x.dim(2) + 2 * (spec.kernel / 2) - spec.kernel) / spec.stride + 1;
        const int ws = (x.dim(3) + 2 * (spec.kernel / 2) - spec.kernel) / spec.stride + 1;
        return {x.dim(0), spec.out_channels, hs, ws};
    }

    std::pair<TensorT<S>, CellStateT<S>> step(const TensorT<S>& x, const CellStateT<S>& state, Mode mode,
                                              int t, const GateClamp& clamp = {}) {
        CellStateT<S> st = state;
        const std::vector<int> want = state_shape(x);
        if (!st.defined()) {
            st.h = TensorT<S>::zeros(want);
            st.c = TensorT<S>::zeros(want);
        } else if (st.h.shape() != want || st.c.shape() != want) {
            throw ShapeError(detail::concat("cell state shape ", shape_str(st.h.shape()),
                                            " does not match expected ", shape_str(want), " at module depth ",
                                            depth_index));
        }

        TensorT<S> ig = sigmoid(add(xi.forward(x, mode, t), hi.forward(st.h, mode, t)));
        TensorT<S> fg = sigmoid(add(xf.forward(x, mode, t), hf.forward(st.h, mode, t)));
        TensorT<S> cand = tanh(add(xc.forward(x, mode, t), hc.forward(st.h, mode, t)));
        TensorT<S> og = sigmoid(add(xo.forward(x, mode, t), ho.forward(st.h, mode, t)));
        if (clamp.any()) {
            if (clamp.input_gate) ig = TensorT<S>::full(want, static_cast<S>(*clamp.input_gate));
            if (clamp.forget_gate) fg = TensorT<S>::full(want, static_cast<S>(*clamp.forget_gate));
            if (clamp.output_gate) og = TensorT<S>::full(want, static_cast<S>(*clamp.output_gate));
        }

        CellStateT<S> next;
        next.c = add(hadamard(fg, st.c), hadamard(ig, cand));
        next.h = hadamard(og, tanh(next.c));
        return {next.h, next};
    }

    void collect_params(const std::string& prefix, ParamList<S>& out) {
        xi.collect_params(prefix + ".xi", out);
        hi.collect_params(prefix + ".hi", out);
        xf.collect_params(prefix + ".xf", out);
        hf.collect_params(prefix + ".hf", out);
        xc.collect_params(prefix + ".xc", out);
        hc.collect_params(prefix + ".hc", out);
        xo.collect_params(prefix + ".xo", out);
        ho.collect_params(prefix + ".ho", out);
    }

    void collect_bn(const std::string& prefix, std::vector<std::pair<std::string, std::vector<BnStats<S>>*>>& out) {
        xi.collect_bn(prefix + ".xi", out);
        hi.collect_bn(prefix + ".hi", out);
        xf.collect_bn(prefix + ".xf", out);
        hf.collect_bn(prefix + ".hf", out);
        xc.collect_bn(prefix + ".xc", out);
        hc.collect_bn(prefix + ".hc", out);
        xo.collect_bn(prefix + ".xo", out);
        ho.collect_bn(prefix + ".ho", out);
    }
};

using ConvBn = ConvBnT<float>;
using GateStack = GateStackT<float>;
using CellState = CellStateT<float>;
using ConvLstmCell = ConvLstmCellT<float>;

/// Applies one gate stack outside a cell (spec-level entry point).
template <typename S>
TensorT<S> gate_stack_apply(GateStackT<S>& stack, const TensorT<S>& input, Mode mode, int step = 0) {
    return stack.forward(input, mode, step);
}

/// One ConvLSTM step (spec-level entry point).
template <typename S>
std::pair<TensorT<S>, CellStateT<S>> convlstm_step(ConvLstmCellT<S>& cell, const TensorT<S>& x,
                                                   const CellStateT<S>& state, Mode mode, int t = 0,
                                                   const GateClamp& clamp = {}) {
    return cell.step(x, state, mode, t, clamp);
}

} // namespace fbnet
