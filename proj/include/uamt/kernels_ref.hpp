#pragma once

#include <cmath>
#include <cstdint>

#include "uamt/kernels.hpp"

// Serial reference kernels: the shortest obviously-correct loop nests,
// kept for correctness tests and for the kernel benchmark. No OpenMP, no
// range clipping tricks.

namespace uamt::kernels::ref {

template <typename T>
void conv3d_forward(const ConvDims& d, const T* in, const T* w, const T* bias, T* out) {
    auto inAt = [&](int b, int c, int z, int y, int x) {
        return in[(((int64_t(b) * d.Ci + c) * d.D + z) * d.H + y) * d.W + x];
    };
    for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
            for (int zo = 0; zo < d.Do; ++zo)
                for (int yo = 0; yo < d.Ho; ++yo)
                    for (int xo = 0; xo < d.Wo; ++xo) {
                        T acc = bias[co];
                        for (int ci = 0; ci < d.Ci; ++ci)
                            for (int kz = 0; kz < d.K; ++kz)
                                for (int ky = 0; ky < d.K; ++ky)
                                    for (int kx = 0; kx < d.K; ++kx) {
                                        const int zi = zo * d.S + kz - d.P;
                                        const int yi = yo * d.S + ky - d.P;
                                        const int xi = xo * d.S + kx - d.P;
                                        if (zi < 0 || zi >= d.D || yi < 0 || yi >= d.H || xi < 0 || xi >= d.W)
                                            continue;
                                        acc += w[(((int64_t(co) * d.Ci + ci) * d.K + kz) * d.K + ky) * d.K + kx] *
                                               inAt(b, ci, zi, yi, xi);
                                    }
                        out[(((int64_t(b) * d.Co + co) * d.Do + zo) * d.Ho + yo) * d.Wo + xo] = acc;
                    }
}

// Scatter formulation: walk every output element once, distribute into din/dw/db.
template <typename T>
void conv3d_backward(const ConvDims& d, const T* in, const T* w, const T* dout, T* din, T* dw, T* db) {
    for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co)
            for (int zo = 0; zo < d.Do; ++zo)
                for (int yo = 0; yo < d.Ho; ++yo)
                    for (int xo = 0; xo < d.Wo; ++xo) {
                        const T g = dout[(((int64_t(b) * d.Co + co) * d.Do + zo) * d.Ho + yo) * d.Wo + xo];
                        if (db) db[co] += g;
                        for (int ci = 0; ci < d.Ci; ++ci)
                            for (int kz = 0; kz < d.K; ++kz)
                                for (int ky = 0; ky < d.K; ++ky)
                                    for (int kx = 0; kx < d.K; ++kx) {
                                        const int zi = zo * d.S + kz - d.P;
                                        const int yi = yo * d.S + ky - d.P;
                                        const int xi = xo * d.S + kx - d.P;
                                        if (zi < 0 || zi >= d.D || yi < 0 || yi >= d.H || xi < 0 || xi >= d.W)
                                            continue;
                                        const int64_t wi =
                                            (((int64_t(co) * d.Ci + ci) * d.K + kz) * d.K + ky) * d.K + kx;
                                        const int64_t ii =
                                            (((int64_t(b) * d.Ci + ci) * d.D + zi) * d.H + yi) * d.W + xi;
                                        if (din) din[ii] += w[wi] * g;
                                        if (dw) dw[wi] += in[ii] * g;
                                    }
                    }
}

template <typename T>
void softmax_channel(int B, int C, int64_t V, const T* logits, T* probs) {
    for (int64_t b = 0; b < B; ++b)
        for (int64_t v = 0; v < V; ++v) {
            T m = logits[b * C * V + v];
            for (int c = 1; c < C; ++c) m = std::max(m, logits[(b * C + c) * V + v]);
            double z = 0;
            for (int c = 0; c < C; ++c) z += std::exp(double(logits[(b * C + c) * V + v] - m));
            for (int c = 0; c < C; ++c)
                probs[(b * C + c) * V + v] = T(std::exp(double(logits[(b * C + c) * V + v] - m)) / z);
        }
}

template <typename T>
void mean_entropy(int Tn, int C, int64_t V, int64_t t_stride, const T* stack, T* u) {
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

template <typename T>
double sum(int64_t n, const T* x) {
    double s = 0;
    for (int64_t i = 0; i < n; ++i) s += double(x[i]);
    return s;
}

}  // namespace uamt::kernels::ref
