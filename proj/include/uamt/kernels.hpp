#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "uamt/common.hpp"
#include "uamt/parallel.hpp"
#include "uamt/rng.hpp"

// OpenMP-parallel compute kernels. Every kernel is deterministic for a fixed
// binary regardless of thread count: outputs are partitioned so each element
// is written by exactly one thread, and reductions are either per-owner
// sequential sums or fixed-block partial sums (see parallel.hpp).
// kernels_ref.hpp carries naive serial implementations of the same
// signatures for testing and benchmarking.

namespace uamt::kernels {

struct ConvDims {
    int B, Ci, D, H, W;  // input
    int Co, K, S, P;     // out channels, cubic kernel, stride, zero pad
    int Do, Ho, Wo;      // output

    static ConvDims make(int B, int Ci, int D, int H, int W, int Co, int K, int S, int P) {
        auto osz = [&](int n) { return (n + 2 * P - K) / S + 1; };
        ConvDims d{B, Ci, D, H, W, Co, K, S, P, osz(D), osz(H), osz(W)};
        if (d.Do < 1 || d.Ho < 1 || d.Wo < 1) throw ShapeError("conv3d: input smaller than kernel");
        return d;
    }
    int64_t in_size() const { return int64_t(B) * Ci * D * H * W; }
    int64_t out_size() const { return int64_t(B) * Co * Do * Ho * Wo; }
    int64_t weight_size() const { return int64_t(Co) * Ci * K * K * K; }
    int64_t flops() const { return 2 * out_size() * int64_t(Ci) * K * K * K; }
};

template <typename T>
void conv3d_forward(const ConvDims& d, const T* __restrict__ in, const T* __restrict__ w,
                    const T* __restrict__ bias, T* __restrict__ out) {
    const int64_t inHW = int64_t(d.H) * d.W;
    const int64_t outHW = int64_t(d.Ho) * d.Wo;
    const bool par = d.flops() > (1 << 16);
#pragma omp parallel for collapse(3) schedule(static) if (par)
    for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
            for (int zo = 0; zo < d.Do; ++zo) {
                for (int yo = 0; yo < d.Ho; ++yo) {
                    T* __restrict__ orow = out + ((int64_t(b) * d.Co + co) * d.Do + zo) * outHW + int64_t(yo) * d.Wo;
                    for (int xo = 0; xo < d.Wo; ++xo) orow[xo] = bias[co];
                    for (int ci = 0; ci < d.Ci; ++ci)
                        for (int kz = 0; kz < d.K; ++kz) {
                            const int zi = zo * d.S + kz - d.P;
                            if (zi < 0 || zi >= d.D) continue;
                            for (int ky = 0; ky < d.K; ++ky) {
                                const int yi = yo * d.S + ky - d.P;
                                if (yi < 0 || yi >= d.H) continue;
                                const T* __restrict__ irow =
                                    in + ((int64_t(b) * d.Ci + ci) * d.D + zi) * inHW + int64_t(yi) * d.W;
                                const T* __restrict__ wrow =
                                    w + (((int64_t(co) * d.Ci + ci) * d.K + kz) * d.K + ky) * d.K;
                                for (int kx = 0; kx < d.K; ++kx) {
                                    const T wv = wrow[kx];
                                    const int off = kx - d.P;
                                    // xi = xo*S + off must land in [0, W)
                                    const int lo = off >= 0 ? 0 : (-off + d.S - 1) / d.S;
                                    const int hi = std::min(d.Wo - 1, (d.W - 1 - off) / d.S);
                                    if (d.S == 1) {
                                        const T* __restrict__ ir = irow + off;
#pragma omp simd
                                        for (int xo = lo; xo <= hi; ++xo) orow[xo] += wv * ir[xo];
                                    } else {
                                        for (int xo = lo; xo <= hi; ++xo) orow[xo] += wv * irow[xo * d.S + off];
                                    }
                                }
                            }
                        }
                }
            }
}

// Accumulates into din (caller zeroes the buffer first).
template <typename T>
void conv3d_backward_input(const ConvDims& d, const T* __restrict__ w, const T* __restrict__ dout,
                           T* __restrict__ din) {
    const int64_t inHW = int64_t(d.H) * d.W;
    const int64_t outHW = int64_t(d.Ho) * d.Wo;
    const bool par = d.flops() > (1 << 16);
#pragma omp parallel for collapse(3) schedule(static) if (par)
    for (int b = 0; b < d.B; ++b)
        for (int ci = 0; ci < d.Ci; ++ci)
            for (int zi = 0; zi < d.D; ++zi) {
                for (int yi = 0; yi < d.H; ++yi) {
                    T* __restrict__ drow = din + ((int64_t(b) * d.Ci + ci) * d.D + zi) * inHW + int64_t(yi) * d.W;
                    for (int co = 0; co < d.Co; ++co)
                        for (int kz = 0; kz < d.K; ++kz) {
                            const int zn = zi + d.P - kz;
                            if (zn < 0 || zn % d.S || zn / d.S >= d.Do) continue;
                            const int zo = zn / d.S;
                            for (int ky = 0; ky < d.K; ++ky) {
                                const int yn = yi + d.P - ky;
                                if (yn < 0 || yn % d.S || yn / d.S >= d.Ho) continue;
                                const int yo = yn / d.S;
                                const T* __restrict__ grow =
                                    dout + ((int64_t(b) * d.Co + co) * d.Do + zo) * outHW + int64_t(yo) * d.Wo;
                                const T* __restrict__ wrow =
                                    w + (((int64_t(co) * d.Ci + ci) * d.K + kz) * d.K + ky) * d.K;
                                for (int kx = 0; kx < d.K; ++kx) {
                                    const T wv = wrow[kx];
                                    const int off = d.P - kx;  // xo = (xi + off)/S
                                    if (d.S == 1) {
                                        const int lo = std::max(0, -off);
                                        const int hi = std::min(d.W - 1, d.Wo - 1 - off);
                                        const T* __restrict__ gr = grow + off;
#pragma omp simd
                                        for (int xi = lo; xi <= hi; ++xi) drow[xi] += wv * gr[xi];
                                    } else {
                                        for (int xo = 0; xo < d.Wo; ++xo) {
                                            const int xi = xo * d.S - off;
                                            if (xi >= 0 && xi < d.W) drow[xi] += wv * grow[xo];
                                        }
                                    }
                                }
                            }
                        }
                }
            }
}

// Accumulates into dw and db (caller zeroes the buffers first).
template <typename T>
void conv3d_backward_params(const ConvDims& d, const T* __restrict__ in, const T* __restrict__ dout,
                            T* __restrict__ dw, T* __restrict__ db) {
    const int64_t inHW = int64_t(d.H) * d.W;
    const int64_t outHW = int64_t(d.Ho) * d.Wo;
    const int KK = d.K * d.K * d.K;
    const bool par = d.flops() > (1 << 16);
#pragma omp parallel for schedule(static) if (par)
    for (int co = 0; co < d.Co; ++co) {
        double bacc = 0.0;
        for (int b = 0; b < d.B; ++b)
            for (int zo = 0; zo < d.Do; ++zo)
                for (int yo = 0; yo < d.Ho; ++yo) {
                    const T* __restrict__ grow =
                        dout + ((int64_t(b) * d.Co + co) * d.Do + zo) * outHW + int64_t(yo) * d.Wo;
                    for (int xo = 0; xo < d.Wo; ++xo) bacc += double(grow[xo]);
                }
        db[co] += T(bacc);

        std::vector<double> acc(static_cast<size_t>(KK), 0.0);
        for (int ci = 0; ci < d.Ci; ++ci) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int b = 0; b < d.B; ++b)
                for (int zo = 0; zo < d.Do; ++zo)
                    for (int yo = 0; yo < d.Ho; ++yo) {
                        const T* __restrict__ grow =
                            dout + ((int64_t(b) * d.Co + co) * d.Do + zo) * outHW + int64_t(yo) * d.Wo;
                        for (int kz = 0; kz < d.K; ++kz) {
                            const int zi = zo * d.S + kz - d.P;
                            if (zi < 0 || zi >= d.D) continue;
                            for (int ky = 0; ky < d.K; ++ky) {
                                const int yi = yo * d.S + ky - d.P;
                                if (yi < 0 || yi >= d.H) continue;
                                const T* __restrict__ irow =
                                    in + ((int64_t(b) * d.Ci + ci) * d.D + zi) * inHW + int64_t(yi) * d.W;
                                for (int kx = 0; kx < d.K; ++kx) {
                                    const int off = kx - d.P;
                                    const int lo = off >= 0 ? 0 : (-off + d.S - 1) / d.S;
                                    const int hi = std::min(d.Wo - 1, (d.W - 1 - off) / d.S);
                                    T s = 0;
                                    if (d.S == 1) {
                                        const T* __restrict__ ir = irow + off;
#pragma omp simd reduction(+ : s)
                                        for (int xo = lo; xo <= hi; ++xo) s += grow[xo] * ir[xo];
                                    } else {
                                        for (int xo = lo; xo <= hi; ++xo) s += grow[xo] * irow[xo * d.S + off];
                                    }
                                    acc[size_t((kz * d.K + ky) * d.K + kx)] += double(s);
                                }
                            }
                        }
                    }
            T* __restrict__ wdst = dw + (int64_t(co) * d.Ci + ci) * KK;
            for (int k = 0; k < KK; ++k) wdst[k] += T(acc[size_t(k)]);
        }
    }
}

// ---- pointwise ----------------------------------------------------------

template <typename T>
void elu_forward(int64_t n, const T* __restrict__ x, T* __restrict__ y) {
#pragma omp parallel for schedule(static) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(std::expm1(double(x[i])));
}

// dx += dy * elu'(x), recovered from the stored output y.
template <typename T>
void elu_backward(int64_t n, const T* __restrict__ y, const T* __restrict__ dy, T* __restrict__ dx) {
#pragma omp parallel for schedule(static) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (y[i] > T(0) ? T(1) : y[i] + T(1));
}

// Inverted dropout: kept activations are scaled by 1/keep at train time.
// The mask is a pure function of (seed, element index).
template <typename T>
void dropout_forward(int64_t n, const T* __restrict__ x, T* __restrict__ y, uint64_t seed, double keep) {
    const T scale = T(1.0 / keep);
#pragma omp parallel for schedule(static) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i)
        y[i] = hash_uniform01(seed, uint64_t(i)) < keep ? x[i] * scale : T(0);
}

template <typename T>
void dropout_backward(int64_t n, const T* __restrict__ dy, T* __restrict__ dx, uint64_t seed, double keep) {
    const T scale = T(1.0 / keep);
#pragma omp parallel for schedule(static) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i)
        if (hash_uniform01(seed, uint64_t(i)) < keep) dx[i] += dy[i] * scale;
}

template <typename T>
void add_clipped_noise(int64_t n, const T* __restrict__ x, T* __restrict__ y, uint64_t seed, double sigma,
                       double clip) {
#pragma omp parallel for schedule(static) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i) {
        const double z = std::clamp(sigma * hash_normal(seed, uint64_t(i)), -clip, clip);
        y[i] = x[i] + T(z);
    }
}

// ---- resampling / layout ------------------------------------------------

// Nearest-neighbor 2x upsampling of a (B, C, D, H, W) tensor.
template <typename T>
void upsample2_forward(int B, int C, int D, int H, int W, const T* __restrict__ x, T* __restrict__ y) {
    const int D2 = 2 * D, H2 = 2 * H, W2 = 2 * W;
    const int64_t BC = int64_t(B) * C;
#pragma omp parallel for collapse(2) schedule(static) if (BC* D2 > 8)
    for (int64_t bc = 0; bc < BC; ++bc)
        for (int z = 0; z < D2; ++z) {
            const T* __restrict__ src = x + (bc * D + z / 2) * int64_t(H) * W;
            T* __restrict__ dst = y + (bc * D2 + z) * int64_t(H2) * W2;
            for (int yy = 0; yy < H2; ++yy) {
                const T* __restrict__ srow = src + int64_t(yy / 2) * W;
                T* __restrict__ drow = dst + int64_t(yy) * W2;
                for (int xx = 0; xx < W2; ++xx) drow[xx] = srow[xx / 2];
            }
        }
}

template <typename T>
void upsample2_backward(int B, int C, int D, int H, int W, const T* __restrict__ dy, T* __restrict__ dx) {
    const int D2 = 2 * D, H2 = 2 * H, W2 = 2 * W;
    const int64_t BC = int64_t(B) * C;
#pragma omp parallel for collapse(2) schedule(static) if (BC* D > 8)
    for (int64_t bc = 0; bc < BC; ++bc)
        for (int z = 0; z < D; ++z) {
            T* __restrict__ dst = dx + (bc * D + z) * int64_t(H) * W;
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) {
                    T s = 0;
                    for (int dz = 0; dz < 2; ++dz) {
                        const T* __restrict__ grow = dy + (bc * D2 + 2 * z + dz) * int64_t(H2) * W2;
                        for (int dyy = 0; dyy < 2; ++dyy) {
                            const T* __restrict__ g = grow + int64_t(2 * yy + dyy) * W2 + 2 * xx;
                            s += g[0] + g[1];
                        }
                    }
                    dst[int64_t(yy) * W + xx] += s;
                }
        }
}

// Concatenate two (B, C?, V) tensors along the channel axis.
template <typename T>
void concat_channels(int B, int C1, int C2, int64_t V, const T* __restrict__ a, const T* __restrict__ b,
                     T* __restrict__ y) {
#pragma omp parallel for schedule(static) if (B > 1)
    for (int bi = 0; bi < B; ++bi) {
        std::copy(a + int64_t(bi) * C1 * V, a + int64_t(bi + 1) * C1 * V,
                  y + int64_t(bi) * (C1 + C2) * V);
        std::copy(b + int64_t(bi) * C2 * V, b + int64_t(bi + 1) * C2 * V,
                  y + int64_t(bi) * (C1 + C2) * V + int64_t(C1) * V);
    }
}

template <typename T>
void concat_channels_backward(int B, int C1, int C2, int64_t V, const T* __restrict__ dy, T* __restrict__ da,
                              T* __restrict__ db) {
#pragma omp parallel for schedule(static) if (B > 1)
    for (int bi = 0; bi < B; ++bi) {
        const T* __restrict__ g = dy + int64_t(bi) * (C1 + C2) * V;
        T* __restrict__ pa = da + int64_t(bi) * C1 * V;
        T* __restrict__ pb = db + int64_t(bi) * C2 * V;
        for (int64_t i = 0; i < int64_t(C1) * V; ++i) pa[i] += g[i];
        for (int64_t i = 0; i < int64_t(C2) * V; ++i) pb[i] += g[int64_t(C1) * V + i];
    }
}

// ---- softmax / entropy ---------------------------------------------------

template <typename T>
bool all_finite(int64_t n, const T* x) {
    bool ok = true;
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i)
        if (!std::isfinite(double(x[i]))) {
#pragma omp atomic write
            ok = false;
        }
    return ok;
}

// Channel softmax of a (B, C, V) tensor, stabilized by max subtraction.
template <typename T>
void softmax_channel(int B, int C, int64_t V, const T* __restrict__ logits, T* __restrict__ probs) {
    if (!all_finite(int64_t(B) * C * V, logits)) throw NumericError("softmax: non-finite logits");
    const int64_t n = int64_t(B) * V;
#pragma omp parallel for schedule(static) if (n > (1 << 13))
    for (int64_t i = 0; i < n; ++i) {
        const int64_t b = i / V, v = i % V;
        const T* __restrict__ in = logits + b * C * V + v;
        T* __restrict__ out = probs + b * C * V + v;
        T m = in[0];
        for (int c = 1; c < C; ++c) m = std::max(m, in[int64_t(c) * V]);
        double z = 0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(double(in[int64_t(c) * V] - m));
            out[int64_t(c) * V] = T(e);
            z += e;
        }
        const double inv = 1.0 / z;
        for (int c = 0; c < C; ++c) out[int64_t(c) * V] = T(double(out[int64_t(c) * V]) * inv);
    }
}

// dlogits += J_softmax^T dprobs, with J evaluated from the stored probs.
template <typename T>
void softmax_channel_backward(int B, int C, int64_t V, const T* __restrict__ probs, const T* __restrict__ dprobs,
                              T* __restrict__ dlogits) {
    const int64_t n = int64_t(B) * V;
#pragma omp parallel for schedule(static) if (n > (1 << 13))
    for (int64_t i = 0; i < n; ++i) {
        const int64_t b = i / V, v = i % V;
        const T* __restrict__ p = probs + b * C * V + v;
        const T* __restrict__ dp = dprobs + b * C * V + v;
        T* __restrict__ dl = dlogits + b * C * V + v;
        double dot = 0;
        for (int c = 0; c < C; ++c) dot += double(dp[int64_t(c) * V]) * double(p[int64_t(c) * V]);
        for (int c = 0; c < C; ++c)
            dl[int64_t(c) * V] += T(double(p[int64_t(c) * V]) * (double(dp[int64_t(c) * V]) - dot));
    }
}

// Voxelwise entropy of the mean class distribution over `Tn` stochastic
// passes. `stack` is indexed [t][c][v] with pass stride `t_stride`
// (>= C*V, so batched stacks can be sliced per item). 0 log 0 is taken as 0
// via clamping at 1e-12.
template <typename T>
void mean_entropy(int Tn, int C, int64_t V, int64_t t_stride, const T* __restrict__ stack, T* __restrict__ u) {
#pragma omp parallel for schedule(static) if (V > (1 << 13))
    for (int64_t v = 0; v < V; ++v) {
        double h = 0;
        for (int c = 0; c < C; ++c) {
            double m = 0;
            for (int t = 0; t < Tn; ++t) m += double(stack[int64_t(t) * t_stride + int64_t(c) * V + v]);
            m /= Tn;
            m = std::clamp(m, 1e-12, 1.0);
            h -= m * std::log(m);
        }
        u[v] = T(h);
    }
}

// mask = 1 where u < threshold (strict). Returns the selected count.
template <typename T>
int64_t threshold_mask(int64_t n, const T* __restrict__ u, double threshold, uint8_t* __restrict__ mask) {
    int64_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count) if (n > (1 << 14))
    for (int64_t i = 0; i < n; ++i) {
        mask[i] = double(u[i]) < threshold ? 1 : 0;
        count += mask[i];
    }
    return count;
}

template <typename T>
void add_inplace(int64_t n, const T* __restrict__ src, T* __restrict__ dst) {
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

// ---- reductions / optimizer ----------------------------------------------

template <typename T>
double sum(int64_t n, const T* x) {
    return block_sum(n, [&](int64_t lo, int64_t hi) {
        double s = 0;
        for (int64_t i = lo; i < hi; ++i) s += double(x[i]);
        return s;
    });
}

// SGD with momentum, weight decay folded into the gradient:
//   m <- mu * m + (g + wd * theta);  theta <- theta - lr * m
inline void sgd_step(int64_t n, float* __restrict__ theta, const float* __restrict__ grad,
                     float* __restrict__ mom, double lr, double mu, double wd) {
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) {
        const double m = mu * double(mom[i]) + (double(grad[i]) + wd * double(theta[i]));
        mom[i] = float(m);
        theta[i] = float(double(theta[i]) - lr * m);
    }
}

inline void ema_blend(int64_t n, float* __restrict__ teacher, const float* __restrict__ student, double alpha) {
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i)
        teacher[i] = float(alpha * double(teacher[i]) + (1.0 - alpha) * double(student[i]));
}

}  // namespace uamt::kernels
