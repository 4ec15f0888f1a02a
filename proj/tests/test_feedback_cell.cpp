#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "feedbacknet/feedbacknet.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace fbnet;
using fbtest::check_gradients;

namespace {

template <typename S>
TensorT<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<S> t = TensorT<S>::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

/// Zero weights/biases/shifts, unit scales: every Conv+BN unit maps any
/// input to zero ("identity BN" on a zero signal).
template <typename S>
void zero_init(ParamList<S> params) {
    for (auto& p : params) {
        const bool is_gamma = p.name.size() >= 6 && p.name.rfind(".gamma") == p.name.size() - 6;
        for (std::size_t i = 0; i < p.tensor.size(); ++i)
            p.tensor.data()[i] = is_gamma ? S(1) : S(0);
    }
}

} // namespace

TEST(GateStackSpec, Validation) {
    GateStackSpec bad{4, 8, 4, 1, 2, false}; // even kernel
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GateStackSpec{4, 8, 3, 1, 0, false}; // zero depth
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = GateStackSpec{0, 8, 3, 1, 1, false};
    EXPECT_THROW(bad.validate(), ConfigError);
    GateStackSpec ok{4, 8, 3, 2, 2, true};
    EXPECT_NO_THROW(ok.validate());
}

TEST(GateStack, Depth1ZeroWeightsGiveZero) {
    Rng rng(1);
    auto g = GateStackT<float>::init(GateStackSpec{3, 4, 3, 1, 1, false}, rng);
    ParamList<float> params;
    g.collect_params("g", params);
    zero_init(params);
    Tensor x = random_tensor<float>({2, 3, 5, 5}, rng);
    Tensor y = g.forward(x, Mode::Train, 0);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_FLOAT_EQ(y.data()[i], 0.f);
}

TEST(GateStack, ResidualSkipsZeroInnerLayer) {
    Rng rng(2);
    auto g = GateStackT<float>::init(GateStackSpec{3, 4, 3, 1, 2, true}, rng);
    // zero only the inner layer
    ParamList<float> inner;
    g.layers[1].collect_params("l1", inner);
    zero_init(inner);
    Tensor x = random_tensor<float>({2, 3, 6, 6}, rng);
    Tensor full = g.forward(x, Mode::Train, 0);
    Tensor first = g.layers[0].forward(x, Mode::Train, 1); // separate stats step, same batch math
    ASSERT_EQ(full.shape(), first.shape());
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full.data()[i], first.data()[i], 1e-6f);
}

TEST(GateStack, InputChannelMismatchErrors) {
    Rng rng(3);
    auto g = GateStackT<float>::init(GateStackSpec{3, 4, 3, 1, 1, false}, rng);
    Tensor x = Tensor::zeros({1, 5, 6, 6});
    EXPECT_THROW(g.forward(x, Mode::Train, 0), ShapeError);
}

TEST(GateStack, Depth3GradientMatchesFiniteDifferences) {
    Rng rng(4);
    auto g = GateStackT<double>::init(GateStackSpec{3, 4, 3, 1, 3, true}, rng);
    auto x = random_tensor<double>({2, 3, 6, 6}, rng);
    ParamList<double> params;
    g.collect_params("g", params);
    std::vector<TensorT<double>> wrt = {x};
    for (auto& p : params) wrt.push_back(p.tensor);
    auto loss = [&] {
        auto y = g.forward(x, Mode::Train, 0);
        return sum(hadamard(y, y));
    };
    auto res = check_gradients<double>(loss, wrt, 1e-4, 1e-4, 60, &rng);
    EXPECT_TRUE(res.ok()) << "max rel " << res.max_rel << " failed " << res.failed << "/" << res.checked;
}

TEST(ConvLstmCell, ZeroWeightsZeroStateGiveZeroOutput) {
    Rng rng(5);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 1, false}, 0, rng);
    ParamList<float> params;
    cell.collect_params("c", params);
    zero_init(params);
    Tensor x = random_tensor<float>({1, 3, 6, 6}, rng);
    auto [out, st] = cell.step(x, {}, Mode::Train, 0);
    // i = f = o = sigmoid(0) = 0.5, c~ = tanh(0) = 0, C' = 0, H' = 0.5*tanh(0) = 0
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_FLOAT_EQ(out.data()[i], 0.f);
    for (std::size_t i = 0; i < st.c.size(); ++i) EXPECT_FLOAT_EQ(st.c.data()[i], 0.f);
}

TEST(ConvLstmCell, ZeroWeightsPropagateHalfCellState) {
    Rng rng(6);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 1, false}, 0, rng);
    ParamList<float> params;
    cell.collect_params("c", params);
    zero_init(params);
    Tensor x = random_tensor<float>({1, 3, 6, 6}, rng);
    CellStateT<float> state;
    state.h = Tensor::zeros({1, 4, 6, 6});
    state.c = random_tensor<float>({1, 4, 6, 6}, rng);
    auto [out, st] = cell.step(x, state, Mode::Train, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float c = state.c.data()[i];
        EXPECT_NEAR(st.c.data()[i], 0.5f * c, 1e-6f);
        EXPECT_NEAR(out.data()[i], 0.5f * std::tanh(0.5f * c), 1e-6f);
    }
}

TEST(ConvLstmCell, MatchesStraightLineTranscription) {
    Rng rng(7);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{4, 6, 3, 2, 2, true}, 0, rng);
    Tensor x = random_tensor<float>({1, 4, 8, 8}, rng);
    CellStateT<float> state;
    state.h = random_tensor<float>({1, 6, 4, 4}, rng, -0.5, 0.5);
    state.c = random_tensor<float>({1, 6, 4, 4}, rng, -0.5, 0.5);
    auto [out, st] = cell.step(x, state, Mode::Train, 0);
    auto [want_h, want_c] = fbtest::transcribe_convlstm_step(cell, x, state.h, state.c, kBnEpsilon);
    ASSERT_EQ(out.shape(), want_h.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_NEAR(out.data()[i], want_h.data()[i], 1e-5f);
        EXPECT_NEAR(st.c.data()[i], want_c.data()[i], 1e-5f);
    }
}

TEST(ConvLstmCell, GateClampConservesCellState) {
    Rng rng(8);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 2, true}, 0, rng);
    Tensor x = random_tensor<float>({2, 3, 6, 6}, rng);
    CellStateT<float> state;
    state.h = random_tensor<float>({2, 4, 6, 6}, rng);
    state.c = random_tensor<float>({2, 4, 6, 6}, rng);
    GateClamp clamp;
    clamp.forget_gate = 1.0;
    clamp.input_gate = 0.0;
    auto [out, st] = cell.step(x, state, Mode::Train, 0, clamp);
    EXPECT_EQ(std::memcmp(st.c.data(), state.c.data(), st.c.size() * sizeof(float)), 0);
}

TEST(ConvLstmCell, OutputBoundedByGateNonlinearities) {
    Rng rng(9);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 2, false}, 0, rng);
    Tensor x = random_tensor<float>({2, 3, 6, 6}, rng, -3.0, 3.0);
    CellStateT<float> state;
    auto [out, st] = cell.step(x, state, Mode::Train, 0);
    for (int step = 1; step < 4; ++step) {
        std::tie(out, st) = cell.step(x, st, Mode::Train, step);
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_GT(out.data()[i], -1.f);
            EXPECT_LT(out.data()[i], 1.f);
        }
    }
}

TEST(ConvLstmCell, SpatialSizeFollowsStride) {
    Rng rng(10);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 2, 2, true}, 0, rng);
    Tensor x = Tensor::zeros({2, 3, 8, 8});
    auto [out, st] = cell.step(x, {}, Mode::Train, 0);
    EXPECT_EQ(out.shape(), (std::vector<int>{2, 4, 4, 4}));
    auto cell1 = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 5, 1, 1, false}, 0, rng);
    auto [out1, st1] = cell1.step(x, {}, Mode::Train, 0);
    EXPECT_EQ(out1.shape(), (std::vector<int>{2, 4, 8, 8}));
}

TEST(ConvLstmCell, StateShapeMismatchNamesDepth) {
    Rng rng(11);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 2, 1, false}, 3, rng);
    Tensor x = Tensor::zeros({1, 3, 8, 8});
    CellStateT<float> state;
    state.h = Tensor::zeros({1, 4, 8, 8}); // wrong: pre-stride resolution
    state.c = Tensor::zeros({1, 4, 8, 8});
    try {
        cell.step(x, state, Mode::Train, 0);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("depth 3"), std::string::npos) << e.what();
    }
}

TEST(ConvLstmCell, StepIsDeterministic) {
    Rng rng(12);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 2, true}, 0, rng);
    Tensor x = random_tensor<float>({1, 3, 6, 6}, rng);
    auto [a, sa] = cell.step(x, {}, Mode::Train, 0);
    auto [b, sb] = cell.step(x, {}, Mode::Train, 0);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
}

TEST(ConvBn, PerStepStatsWithEvalFallback) {
    Rng rng(13);
    auto layer = ConvBnT<float>::init(3, 4, 3, 1, rng);
    Tensor x0 = random_tensor<float>({2, 3, 5, 5}, rng);
    Tensor x1 = random_tensor<float>({2, 3, 5, 5}, rng, 1.0, 3.0);
    layer.forward(x0, Mode::Train, 0);
    layer.forward(x1, Mode::Train, 1);
    ASSERT_EQ(layer.stats.size(), 2u);
    EXPECT_TRUE(layer.stats[0].initialized());
    EXPECT_TRUE(layer.stats[1].initialized());
    EXPECT_NE(layer.stats[0].mean[0], layer.stats[1].mean[0]);
    // eval beyond the training horizon falls back to the last populated step
    Tensor beyond = layer.forward(x0, Mode::Eval, 7);
    Tensor last = layer.forward(x0, Mode::Eval, 1);
    EXPECT_EQ(std::memcmp(beyond.data(), last.data(), beyond.size() * sizeof(float)), 0);
}

TEST(ConvLstmCell, ForgetGateStartsOpen) {
    Rng rng(14);
    auto cell = ConvLstmCellT<float>::init(GateStackSpec{3, 4, 3, 1, 2, true}, 0, rng);
    // final BN shift of the input-side forget stack is initialized to 1
    const Tensor& beta = cell.xf.layers.back().beta;
    for (std::size_t i = 0; i < beta.size(); ++i) EXPECT_FLOAT_EQ(beta.data()[i], 1.f);
}
