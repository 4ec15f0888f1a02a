#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "feedbacknet/common.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbnet {

namespace detail {

// C[M,N] += A[M,K] * B[K,N], all row-major.
template <typename S>
void gemm_nn(int M, int K, int N, const S* A, const S* B, S* C) {
    for (int i = 0; i < M; ++i) {
        const S* a = A + static_cast<std::size_t>(i) * K;
        S* c = C + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const S av = a[k];
            const S* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A[M,K] * B^T where B is row-major [N,K].
template <typename S>
void gemm_nt(int M, int K, int N, const S* A, const S* B, S* C) {
    for (int i = 0; i < M; ++i) {
        const S* a = A + static_cast<std::size_t>(i) * K;
        S* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const S* b = B + static_cast<std::size_t>(j) * K;
            S acc = S(0);
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C[M,N] += A^T * B where A is row-major [K,M] and B is row-major [K,N].
template <typename S>
void gemm_tn(int M, int K, int N, const S* A, const S* B, S* C) {
    for (int k = 0; k < K; ++k) {
        const S* a = A + static_cast<std::size_t>(k) * M;
        const S* b = B + static_cast<std::size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const S av = a[i];
            S* c = C + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

struct ConvDims {
    int n, cin, h, w;
    int cout, k, stride, pad;
    int ho, wo;
    int patch() const { return cin * k * k; } // im2col rows
    int pixels() const { return ho * wo; }    // per-sample output positions
};

inline ConvDims conv_dims(const std::vector<int>& xs, const std::vector<int>& ws, int stride, int pad) {
    ConvDims d{};
    d.n = xs[0];
    d.cin = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.cout = ws[0];
    d.k = ws[2];
    d.stride = stride;
    d.pad = pad;
    d.ho = (d.h + 2 * pad - d.k) / stride + 1;
    d.wo = (d.w + 2 * pad - d.k) / stride + 1;
    return d;
}

// col is [patch, n*pixels]; column index is sample-major (n * pixels + p).
template <typename S>
void im2col(const ConvDims& d, const S* x, S* col) {
    const int P = d.pixels();
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int ci = 0; ci < d.cin; ++ci) {
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                S* row = col + (static_cast<std::size_t>(ci) * d.k * d.k + ky * d.k + kx) *
                                   (static_cast<std::size_t>(d.n) * P);
                for (int n = 0; n < d.n; ++n) {
                    const S* xp = x + (static_cast<std::size_t>(n) * d.cin + ci) * plane;
                    S* dst = row + static_cast<std::size_t>(n) * P;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.h) {
                            for (int ox = 0; ox < d.wo; ++ox) dst[oy * d.wo + ox] = S(0);
                            continue;
                        }
                        const S* xrow = xp + static_cast<std::size_t>(iy) * d.w;
                        for (int ox = 0; ox < d.wo; ++ox) {
                            const int ix = ox * d.stride + kx - d.pad;
                            dst[oy * d.wo + ox] = (ix < 0 || ix >= d.w) ? S(0) : xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

// Accumulates col (same layout as im2col) back into the input gradient.
template <typename S>
void col2im_acc(const ConvDims& d, const S* col, S* gx) {
    const int P = d.pixels();
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int ci = 0; ci < d.cin; ++ci) {
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                const S* row = col + (static_cast<std::size_t>(ci) * d.k * d.k + ky * d.k + kx) *
                                         (static_cast<std::size_t>(d.n) * P);
                for (int n = 0; n < d.n; ++n) {
                    S* gp = gx + (static_cast<std::size_t>(n) * d.cin + ci) * plane;
                    const S* src = row + static_cast<std::size_t>(n) * P;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.h) continue;
                        S* grow = gp + static_cast<std::size_t>(iy) * d.w;
                        for (int ox = 0; ox < d.wo; ++ox) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix >= 0 && ix < d.w) grow[ix] += src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
bool any_requires_grad(std::initializer_list<TensorT<S>> ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

} // namespace detail

/// 2-D cross-correlation of input [N,Cin,H,W] with weight [Cout,Cin,k,k]
/// plus per-output-channel bias. Gradients w.r.t. input, weight, and bias
/// are recorded when a tape is active.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  int stride, int padding) {
    if (input.ndim() != 4 || weight.ndim() != 4)
        throw ShapeError(detail::concat("conv2d expects 4-d input and weight, got ",
                                        shape_str(input.shape()), " and ", shape_str(weight.shape())));
    if (weight.dim(2) != weight.dim(3))
        throw ShapeError(detail::concat("conv2d kernel must be square, got ", shape_str(weight.shape())));
    if (input.dim(1) != weight.dim(1))
        throw ShapeError(detail::concat("conv2d channel mismatch: input ", shape_str(input.shape()),
                                        " vs weight ", shape_str(weight.shape())));
    if (bias.ndim() != 1 || bias.dim(0) != weight.dim(0))
        throw ShapeError(detail::concat("conv2d bias shape ", shape_str(bias.shape()),
                                        " does not match Cout=", weight.dim(0)));
    if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
    if (padding < 0) throw ShapeError("conv2d padding must be >= 0");

    const auto d = detail::conv_dims(input.shape(), weight.shape(), stride, padding);
    if (d.h + 2 * d.pad < d.k || d.w + 2 * d.pad < d.k)
        throw ShapeError(detail::concat("conv2d kernel ", d.k, "x", d.k, " does not fit input ",
                                        shape_str(input.shape()), " with padding ", padding));

    const int P = d.pixels();
    const std::size_t np = static_cast<std::size_t>(d.n) * P;
    std::vector<S> col(static_cast<std::size_t>(d.patch()) * np);
    detail::im2col(d, input.data(), col.data());

    std::vector<S> prod(static_cast<std::size_t>(d.cout) * np, S(0));
    detail::gemm_nn(d.cout, d.patch(), static_cast<int>(np), weight.data(), col.data(), prod.data());

    TensorT<S> out = TensorT<S>::zeros({d.n, d.cout, d.ho, d.wo});
    S* y = out.data();
    const S* b = bias.data();
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.cout; ++co) {
            const S* src = prod.data() + static_cast<std::size_t>(co) * np + static_cast<std::size_t>(n) * P;
            S* dst = y + (static_cast<std::size_t>(n) * d.cout + co) * P;
            const S bv = b[co];
            for (int p = 0; p < P; ++p) dst[p] = src[p] + bv;
        }

    TapeT<S>* tape = TapeT<S>::active();
    if (tape && detail::any_requires_grad<S>({input, weight, bias})) {
        out.set_requires_grad(true);
        TensorT<S> x = input, w = weight, bi = bias, o = out;
        tape->record(out, [x, w, bi, o, d]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            const int P = d.pixels();
            const std::size_t np = static_cast<std::size_t>(d.n) * P;
            std::vector<S> gyr(static_cast<std::size_t>(d.cout) * np);
            for (int n = 0; n < d.n; ++n)
                for (int co = 0; co < d.cout; ++co) {
                    const S* src = gy + (static_cast<std::size_t>(n) * d.cout + co) * P;
                    S* dst = gyr.data() + static_cast<std::size_t>(co) * np + static_cast<std::size_t>(n) * P;
                    for (int p = 0; p < P; ++p) dst[p] = src[p];
                }
            if (bi.requires_grad()) {
                S* gb = bi.grad();
                for (int co = 0; co < d.cout; ++co) {
                    S acc = S(0);
                    const S* row = gyr.data() + static_cast<std::size_t>(co) * np;
                    for (std::size_t p = 0; p < np; ++p) acc += row[p];
                    gb[co] += acc;
                }
            }
            if (w.requires_grad() || x.requires_grad()) {
                std::vector<S> col(static_cast<std::size_t>(d.patch()) * np);
                detail::im2col(d, x.data(), col.data());
                if (w.requires_grad())
                    detail::gemm_nt(d.cout, static_cast<int>(np), d.patch(), gyr.data(), col.data(), w.grad());
                if (x.requires_grad()) {
                    std::vector<S> gcol(static_cast<std::size_t>(d.patch()) * np, S(0));
                    detail::gemm_tn(d.patch(), d.cout, static_cast<int>(np), w.data(), gyr.data(),
                                    gcol.data());
                    detail::col2im_acc(d, gcol.data(), x.grad());
                }
            }
        });
    }
    return out;
}

/// Per-channel running statistics for batch normalization.
template <typename S>
struct BnStats {
    std::vector<S> mean, var;
    long long batches = 0;
    bool initialized() const { return batches > 0; }
};

/// Batch normalization over [N,C,H,W]. Train mode normalizes by batch
/// statistics (biased variance) and folds them into the running stats with
/// the given momentum; eval mode normalizes by the running stats. The
/// backward rule is recorded in both modes (the eval rule is a plain affine
/// map).
template <typename S>
TensorT<S> batchnorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                     BnStats<S>& stats, Mode mode, double momentum, double eps) {
    if (x.ndim() != 4)
        throw ShapeError(detail::concat("batchnorm expects 4-d input, got ", shape_str(x.shape())));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != static_cast<std::size_t>(C))
        throw ShapeError(detail::concat("batchnorm gamma/beta must have ", C, " channels"));

    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t R = static_cast<std::size_t>(N) * plane; // elements per channel
    TensorT<S> out = TensorT<S>::zeros(x.shape());

    std::vector<S> mu(C), istd(C);
    if (mode == Mode::Train) {
        if (R < 2)
            throw ContractError(detail::concat("batchnorm train mode needs >= 2 elements per channel, got ", R));
        if (stats.mean.empty()) {
            stats.mean.assign(C, S(0));
            stats.var.assign(C, S(0));
        }
        for (int c = 0; c < C; ++c) {
            double sum = 0, sq = 0;
            for (int n = 0; n < N; ++n) {
                const S* p = x.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum += p[i];
                    sq += static_cast<double>(p[i]) * p[i];
                }
            }
            const double m = sum / static_cast<double>(R);
            const double v = std::max(0.0, sq / static_cast<double>(R) - m * m);
            mu[c] = static_cast<S>(m);
            istd[c] = static_cast<S>(1.0 / std::sqrt(v + eps));
            stats.mean[c] = static_cast<S>((1.0 - momentum) * stats.mean[c] + momentum * m);
            stats.var[c] = static_cast<S>((1.0 - momentum) * stats.var[c] + momentum * v);
        }
        stats.batches++;
    } else {
        if (!stats.initialized())
            throw ContractError(
                "batchnorm eval mode before any running-stat update; train first or load a checkpoint");
        for (int c = 0; c < C; ++c) {
            mu[c] = stats.mean[c];
            istd[c] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(stats.var[c]) + eps));
        }
    }

    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* p = x.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            S* q = out.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            const S g = gamma.data()[c], b = beta.data()[c], m = mu[c], is = istd[c];
            for (std::size_t i = 0; i < plane; ++i) q[i] = g * (p[i] - m) * is + b;
        }

    TapeT<S>* tape = TapeT<S>::active();
    if (tape && detail::any_requires_grad<S>({x, gamma, beta})) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, ga = gamma, be = beta, o = out;
        const bool train = (mode == Mode::Train);
        tape->record(out, [xi, ga, be, o, mu, istd, N, C, plane, R, train]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            for (int c = 0; c < C; ++c) {
                const S m = mu[c], is = istd[c], g = ga.data()[c];
                double sum_gy = 0, sum_gyx = 0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    const S* xp = xi.data() + off;
                    const S* gp = gy + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_gy += gp[i];
                        sum_gyx += static_cast<double>(gp[i]) * ((xp[i] - m) * is);
                    }
                }
                if (ga.requires_grad()) ga.grad()[c] += static_cast<S>(sum_gyx);
                if (be.requires_grad()) be.grad()[c] += static_cast<S>(sum_gy);
                if (xi.requires_grad()) {
                    S* gx = xi.grad();
                    const double mg = sum_gy / static_cast<double>(R);
                    const double mgx = sum_gyx / static_cast<double>(R);
                    for (int n = 0; n < N; ++n) {
                        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                        const S* xp = xi.data() + off;
                        const S* gp = gy + off;
                        S* gq = gx + off;
                        if (train) {
                            for (std::size_t i = 0; i < plane; ++i) {
                                const double xh = (xp[i] - m) * is;
                                gq[i] += static_cast<S>(g * is * (gp[i] - mg - xh * mgx));
                            }
                        } else {
                            for (std::size_t i = 0; i < plane; ++i) gq[i] += g * is * gp[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

namespace detail {

template <typename S, typename Fwd, typename Bwd>
TensorT<S> unary_op(const TensorT<S>& x, Fwd fwd, Bwd bwd) {
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = fwd(x.data()[i]);
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, o = out;
        tape->record(out, [xi, o, bwd]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gx = xi.grad();
            for (std::size_t i = 0; i < xi.size(); ++i) gx[i] += bwd(xi.data()[i], o.data()[i]) * gy[i];
        });
    }
    return out;
}

} // namespace detail

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    return detail::unary_op(
        x,
        [](S v) {
            if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
            const S e = std::exp(v);
            return e / (S(1) + e);
        },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
TensorT<S> tanh(const TensorT<S>& x) {
    return detail::unary_op(x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    return detail::unary_op(x, [](S v) { return v > S(0) ? v : S(0); },
                            [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

/// y = c * x
template <typename S>
TensorT<S> scale(const TensorT<S>& x, double c) {
    const S cs = static_cast<S>(c);
    return detail::unary_op(x, [cs](S v) { return cs * v; }, [cs](S, S) { return cs; });
}

namespace detail {

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(concat(op, " shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
}

} // namespace detail

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "add");
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && detail::any_requires_grad<S>({a, b})) {
        out.set_requires_grad(true);
        TensorT<S> ai = a, bi = b, o = out;
        tape->record(out, [ai, bi, o]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            if (ai.requires_grad()) {
                S* g = ai.grad();
                for (std::size_t i = 0; i < ai.size(); ++i) g[i] += gy[i];
            }
            if (bi.requires_grad()) {
                S* g = bi.grad();
                for (std::size_t i = 0; i < bi.size(); ++i) g[i] += gy[i];
            }
        });
    }
    return out;
}

/// Elementwise (Hadamard) product.
template <typename S>
TensorT<S> hadamard(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "hadamard");
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && detail::any_requires_grad<S>({a, b})) {
        out.set_requires_grad(true);
        TensorT<S> ai = a, bi = b, o = out;
        tape->record(out, [ai, bi, o]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            if (ai.requires_grad()) {
                S* g = ai.grad();
                for (std::size_t i = 0; i < ai.size(); ++i) g[i] += gy[i] * bi.data()[i];
            }
            if (bi.requires_grad()) {
                S* g = bi.grad();
                for (std::size_t i = 0; i < bi.size(); ++i) g[i] += gy[i] * ai.data()[i];
            }
        });
    }
    return out;
}

/// Mean over each k x k window of input [N,C,H,W].
template <typename S>
TensorT<S> avg_pool(const TensorT<S>& x, int k, int stride) {
    if (x.ndim() != 4)
        throw ShapeError(detail::concat("avg_pool expects 4-d input, got ", shape_str(x.shape())));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (k > H || k > W)
        throw ShapeError(detail::concat("avg_pool window ", k, " exceeds spatial dims of ",
                                        shape_str(x.shape())));
    if (k < 1 || stride < 1) throw ShapeError("avg_pool window and stride must be >= 1");
    const int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
    TensorT<S> out = TensorT<S>::zeros({N, C, Ho, Wo});
    const S inv = S(1) / static_cast<S>(k * k);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* p = x.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            S* q = out.data() + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    S acc = S(0);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += p[(oy * stride + ky) * W + ox * stride + kx];
                    q[oy * Wo + ox] = acc * inv;
                }
        }
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, o = out;
        tape->record(out, [xi, o, N, C, H, W, Ho, Wo, k, stride, inv]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gx = xi.grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    S* gp = gx + (static_cast<std::size_t>(n) * C + c) * H * W;
                    const S* gq = gy + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
                    for (int oy = 0; oy < Ho; ++oy)
                        for (int ox = 0; ox < Wo; ++ox) {
                            const S g = gq[oy * Wo + ox] * inv;
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    gp[(oy * stride + ky) * W + ox * stride + kx] += g;
                        }
                }
        });
    }
    return out;
}

/// Affine map: [N,F] x [F,K] + bias[K] -> [N,K].
template <typename S>
TensorT<S> fully_connected(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.ndim() != 2 || w.ndim() != 2)
        throw ShapeError(detail::concat("fully_connected expects 2-d input and weight, got ",
                                        shape_str(x.shape()), " and ", shape_str(w.shape())));
    if (x.dim(1) != w.dim(0))
        throw ShapeError(detail::concat("fully_connected feature mismatch: ", shape_str(x.shape()), " vs ",
                                        shape_str(w.shape())));
    if (b.ndim() != 1 || b.dim(0) != w.dim(1))
        throw ShapeError(detail::concat("fully_connected bias shape ", shape_str(b.shape()),
                                        " does not match K=", w.dim(1)));
    const int N = x.dim(0), F = x.dim(1), K = w.dim(1);
    TensorT<S> out = TensorT<S>::zeros({N, K});
    for (int n = 0; n < N; ++n) {
        S* row = out.data() + static_cast<std::size_t>(n) * K;
        for (int j = 0; j < K; ++j) row[j] = b.data()[j];
    }
    detail::gemm_nn(N, F, K, x.data(), w.data(), out.data());
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && detail::any_requires_grad<S>({x, w, b})) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, wi = w, bi = b, o = out;
        tape->record(out, [xi, wi, bi, o, N, F, K]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            if (bi.requires_grad()) {
                S* gb = bi.grad();
                for (int n = 0; n < N; ++n)
                    for (int j = 0; j < K; ++j) gb[j] += gy[static_cast<std::size_t>(n) * K + j];
            }
            if (wi.requires_grad()) detail::gemm_tn(F, N, K, xi.data(), gy, wi.grad());
            if (xi.requires_grad()) detail::gemm_nt(N, K, F, gy, wi.data(), xi.grad());
        });
    }
    return out;
}

/// Mean over the batch of -log softmax(logits)[target]. Numerically
/// stabilized by max subtraction; the recorded backward rule is
/// (softmax - one_hot) / N.
template <typename S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2)
        throw ShapeError(detail::concat("softmax_cross_entropy expects [N,K] logits, got ",
                                        shape_str(logits.shape())));
    const int N = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(targets.size()) != N)
        throw ShapeError(detail::concat("softmax_cross_entropy got ", targets.size(), " targets for batch ", N));
    for (int n = 0; n < N; ++n)
        if (targets[n] < 0 || targets[n] >= K)
            throw IndexError(detail::concat("target ", targets[n], " out of range [0,", K, ") at row ", n));

    std::vector<double> lse(N);
    double total = 0;
    for (int n = 0; n < N; ++n) {
        const S* z = logits.data() + static_cast<std::size_t>(n) * K;
        double m = z[0];
        for (int j = 1; j < K; ++j) m = std::max(m, static_cast<double>(z[j]));
        double s = 0;
        for (int j = 0; j < K; ++j) s += std::exp(static_cast<double>(z[j]) - m);
        lse[n] = m + std::log(s);
        total += lse[n] - static_cast<double>(z[targets[n]]);
    }
    TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / N));
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> zi = logits, o = out;
        std::vector<int> tg = targets;
        tape->record(out, [zi, o, tg, lse, N, K]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gz = zi.grad();
            const double scale = static_cast<double>(gy[0]) / N;
            for (int n = 0; n < N; ++n) {
                const S* z = zi.data() + static_cast<std::size_t>(n) * K;
                S* g = gz + static_cast<std::size_t>(n) * K;
                for (int j = 0; j < K; ++j) {
                    const double p = std::exp(static_cast<double>(z[j]) - lse[n]);
                    g[j] += static_cast<S>(scale * (p - (j == tg[n] ? 1.0 : 0.0)));
                }
            }
        });
    }
    return out;
}

/// Row-wise softmax probabilities. Forward-only: no backward rule is
/// recorded (use softmax_cross_entropy or taxonomy::coarse_cross_entropy
/// for differentiable losses).
template <typename S>
TensorT<S> softmax_probs(const TensorT<S>& logits) {
    if (logits.ndim() != 2)
        throw ShapeError(detail::concat("softmax_probs expects [N,K] logits, got ", shape_str(logits.shape())));
    const int N = logits.dim(0), K = logits.dim(1);
    TensorT<S> out = TensorT<S>::zeros(logits.shape());
    for (int n = 0; n < N; ++n) {
        const S* z = logits.data() + static_cast<std::size_t>(n) * K;
        S* p = out.data() + static_cast<std::size_t>(n) * K;
        double m = z[0];
        for (int j = 1; j < K; ++j) m = std::max(m, static_cast<double>(z[j]));
        double s = 0;
        for (int j = 0; j < K; ++j) s += std::exp(static_cast<double>(z[j]) - m);
        for (int j = 0; j < K; ++j) p[j] = static_cast<S>(std::exp(static_cast<double>(z[j]) - m) / s);
    }
    return out;
}

/// Scalar sum of all elements.
template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
    TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, o = out;
        tape->record(out, [xi, o]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gx = xi.grad();
            for (std::size_t i = 0; i < xi.size(); ++i) gx[i] += gy[0];
        });
    }
    return out;
}

/// Size-preserving reshape (copies values; backward is identity).
template <typename S>
TensorT<S> reshape(const TensorT<S>& x, std::vector<int> shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError(detail::concat("reshape to ", shape_str(shape), " changes element count of ",
                                        shape_str(x.shape())));
    TensorT<S> out = TensorT<S>::from_data(std::move(shape), x.values());
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> xi = x, o = out;
        tape->record(out, [xi, o]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gx = xi.grad();
            for (std::size_t i = 0; i < xi.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

template <typename S>
void backward(TapeT<S>& tape, const TensorT<S>& root) {
    tape.backward(root);
}

} // namespace fbnet
