#pragma once

// Independent reference implementations used as test oracles. These
// deliberately re-derive results with plain nested loops and share no code
// with the library's operator implementations.

#include <cmath>
#include <vector>

#include "feedbacknet/convlstm.hpp"
#include "feedbacknet/dataset.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbtest {

/// Naive 6-nested-loop cross-correlation.
template <typename S>
fbnet::TensorT<S> naive_conv2d(const fbnet::TensorT<S>& x, const fbnet::TensorT<S>& w,
                               const fbnet::TensorT<S>& b, int stride, int pad) {
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    fbnet::TensorT<S> y = fbnet::TensorT<S>::zeros({N, Cout, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b.data()[co];
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(x.at({n, ci, iy, ix})) *
                                       static_cast<double>(w.at({co, ci, ky, kx}));
                            }
                    y.data()[((static_cast<std::size_t>(n) * Cout + co) * Ho + oy) * Wo + ox] =
                        static_cast<S>(acc);
                }
    return y;
}

/// Train-mode batchnorm from the definition (biased batch variance).
template <typename S>
fbnet::TensorT<S> naive_batchnorm_train(const fbnet::TensorT<S>& x, const fbnet::TensorT<S>& gamma,
                                        const fbnet::TensorT<S>& beta, double eps) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    fbnet::TensorT<S> y = fbnet::TensorT<S>::zeros(x.shape());
    const double R = static_cast<double>(N) * H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0;
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) mean += x.at({n, c, i, j});
        mean /= R;
        double var = 0;
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const double d = x.at({n, c, i, j}) - mean;
                    var += d * d;
                }
        var /= R;
        const double istd = 1.0 / std::sqrt(var + eps);
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const double v = gamma.data()[c] * (x.at({n, c, i, j}) - mean) * istd + beta.data()[c];
                    y.data()[((static_cast<std::size_t>(n) * C + c) * H + i) * W + j] = static_cast<S>(v);
                }
    }
    return y;
}

template <typename S>
fbnet::TensorT<S> naive_relu(const fbnet::TensorT<S>& x) {
    fbnet::TensorT<S> y = fbnet::TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    return y;
}

/// Straight-line transcription of one gate function: depth repetitions of
/// Conv -> BN with ReLU between layers and an identity residual around the
/// inner layers when enabled.
template <typename S>
fbnet::TensorT<S> transcribe_gate_stack(fbnet::GateStackT<S>& g, const fbnet::TensorT<S>& x, double eps) {
    fbnet::TensorT<S> first =
        naive_batchnorm_train(naive_conv2d(x, g.layers[0].weight, g.layers[0].bias, g.layers[0].stride,
                                           g.layers[0].pad),
                              g.layers[0].gamma, g.layers[0].beta, eps);
    if (g.spec.depth == 1) return first;
    fbnet::TensorT<S> inner = first;
    for (int l = 1; l < g.spec.depth; ++l)
        inner = naive_batchnorm_train(naive_conv2d(naive_relu(inner), g.layers[l].weight, g.layers[l].bias,
                                                   g.layers[l].stride, g.layers[l].pad),
                                      g.layers[l].gamma, g.layers[l].beta, eps);
    if (!g.spec.residual) return inner;
    fbnet::TensorT<S> out = fbnet::TensorT<S>::zeros(inner.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = inner.data()[i] + first.data()[i];
    return out;
}

/// Straight-line transcription of one ConvLSTM step:
///   i = sig(Wxi(X)+Whi(H)), f = sig(Wxf(X)+Whf(H)),
///   c~ = tanh(Wxc(X)+Whc(H)), C' = f.C + i.c~,
///   o = sig(Wxo(X)+Who(H)), H' = o.tanh(C'), X_out = H'.
template <typename S>
std::pair<fbnet::TensorT<S>, fbnet::TensorT<S>> transcribe_convlstm_step(fbnet::ConvLstmCellT<S>& cell,
                                                                         const fbnet::TensorT<S>& x,
                                                                         const fbnet::TensorT<S>& h,
                                                                         const fbnet::TensorT<S>& c,
                                                                         double eps) {
    auto gate_sum = [&](fbnet::GateStackT<S>& gx, fbnet::GateStackT<S>& gh) {
        fbnet::TensorT<S> a = transcribe_gate_stack(gx, x, eps);
        fbnet::TensorT<S> b = transcribe_gate_stack(gh, h, eps);
        fbnet::TensorT<S> s = fbnet::TensorT<S>::zeros(a.shape());
        for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = a.data()[i] + b.data()[i];
        return s;
    };
    fbnet::TensorT<S> zi = gate_sum(cell.xi, cell.hi);
    fbnet::TensorT<S> zf = gate_sum(cell.xf, cell.hf);
    fbnet::TensorT<S> zc = gate_sum(cell.xc, cell.hc);
    fbnet::TensorT<S> zo = gate_sum(cell.xo, cell.ho);
    fbnet::TensorT<S> new_c = fbnet::TensorT<S>::zeros(zi.shape());
    fbnet::TensorT<S> new_h = fbnet::TensorT<S>::zeros(zi.shape());
    for (std::size_t j = 0; j < new_c.size(); ++j) {
        const double ig = 1.0 / (1.0 + std::exp(-static_cast<double>(zi.data()[j])));
        const double fg = 1.0 / (1.0 + std::exp(-static_cast<double>(zf.data()[j])));
        const double og = 1.0 / (1.0 + std::exp(-static_cast<double>(zo.data()[j])));
        const double cand = std::tanh(static_cast<double>(zc.data()[j]));
        const double cn = fg * static_cast<double>(c.data()[j]) + ig * cand;
        new_c.data()[j] = static_cast<S>(cn);
        new_h.data()[j] = static_cast<S>(og * std::tanh(cn));
    }
    return {new_h, new_c};
}

/// Nearest-centroid pixel classifier, the separability floor for the
/// synthetic dataset.
inline double centroid_accuracy(const fbnet::Dataset& train, const fbnet::Dataset& test) {
    const int K = train.tax.fine_count();
    const std::size_t P = train.pixel_count();
    std::vector<std::vector<double>> centroid(K, std::vector<double>(P, 0.0));
    std::vector<long> count(K, 0);
    for (const auto& s : train.samples) {
        for (std::size_t j = 0; j < P; ++j) centroid[s.fine][j] += s.pixels[j];
        count[s.fine]++;
    }
    for (int k = 0; k < K; ++k)
        for (std::size_t j = 0; j < P; ++j) centroid[k][j] /= std::max<long>(1, count[k]);
    long ok = 0;
    for (const auto& s : test.samples) {
        int best = 0;
        double best_d = 1e300;
        for (int k = 0; k < K; ++k) {
            double d = 0;
            for (std::size_t j = 0; j < P; ++j) {
                const double diff = centroid[k][j] - s.pixels[j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        if (best == s.fine) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(test.samples.size());
}

} // namespace fbtest
