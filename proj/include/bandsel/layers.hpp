#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bandsel/errors.hpp"
#include "bandsel/tensor.hpp"

// Forward/backward kernels for the fixed layer set: conv2d, ReLU, 2x2 max
// pooling, batch norm, fully connected, global average pooling, softmax.
// All functions are pure over their inputs and single-threaded; summations
// run in a fixed order so results are reproducible bit for bit.

namespace bandsel {

// ---------------------------------------------------------------------------
// conv2d (cross-correlation, no kernel flip)
// ---------------------------------------------------------------------------

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int pad) {
    const std::size_t padded = in + 2 * static_cast<std::size_t>(pad);
    if (padded < k)
        throw ConfigError("conv2d: kernel larger than padded input");
    return (padded - k) / static_cast<std::size_t>(stride) + 1;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                  int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ConfigError("conv2d: expected rank-4 input and filters");
    if (x.dim(1) != w.dim(1))
        throw ConfigError("conv2d: input channels " + std::to_string(x.dim(1)) +
                          " do not match filter channels " + std::to_string(w.dim(1)));
    if (stride < 1 || pad < 0)
        throw ConfigError("conv2d: invalid stride/pad");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t L = w.dim(0), P = w.dim(2), Q = w.dim(3);
    if (bias.size() != 0 && bias.size() != L)
        throw ConfigError("conv2d: bias size does not match filter count");
    const std::size_t Ho = conv_out_extent(H, P, stride, pad);
    const std::size_t Wo = conv_out_extent(W, Q, stride, pad);

    TensorT<T> y({N, L, Ho, Wo});
    const T* xd = x.ptr();
    const T* wd = w.ptr();
    T* yd = y.ptr();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t l = 0; l < L; ++l) {
            const T b = bias.size() ? bias.data[l] : T(0);
            T* yrow = yd + (n * L + l) * Ho * Wo;
            for (std::size_t i = 0; i < Ho * Wo; ++i) yrow[i] = b;
            for (std::size_t c = 0; c < C; ++c) {
                const T* xplane = xd + (n * C + c) * H * W;
                const T* wplane = wd + (l * C + c) * P * Q;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t q = 0; q < Q; ++q) {
                        const T wv = wplane[p * Q + q];
                        if (wv == T(0)) continue;
                        for (std::size_t ho = 0; ho < Ho; ++ho) {
                            const long hi = static_cast<long>(ho) * stride - pad +
                                            static_cast<long>(p);
                            if (hi < 0 || hi >= static_cast<long>(H)) continue;
                            const T* xrow = xplane + static_cast<std::size_t>(hi) * W;
                            T* orow = yrow + ho * Wo;
                            for (std::size_t wo = 0; wo < Wo; ++wo) {
                                const long wi = static_cast<long>(wo) * stride - pad +
                                                static_cast<long>(q);
                                if (wi < 0 || wi >= static_cast<long>(W)) continue;
                                orow[wo] += wv * xrow[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                     int stride, int pad, TensorT<T>& gx, TensorT<T>& gw, TensorT<T>& gb) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t L = w.dim(0), P = w.dim(2), Q = w.dim(3);
    const std::size_t Ho = gy.dim(2), Wo = gy.dim(3);

    gx = TensorT<T>(x.shape);
    gw = TensorT<T>(w.shape);
    gb = TensorT<T>({L});
    const T* xd = x.ptr();
    const T* wd = w.ptr();
    const T* gd = gy.ptr();

    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t l = 0; l < L; ++l) {
            const T* gplane = gd + (n * L + l) * Ho * Wo;
            T gbsum = T(0);
            for (std::size_t i = 0; i < Ho * Wo; ++i) gbsum += gplane[i];
            gb.data[l] += gbsum;
            for (std::size_t c = 0; c < C; ++c) {
                const T* xplane = xd + (n * C + c) * H * W;
                const T* wplane = wd + (l * C + c) * P * Q;
                T* gxplane = gx.ptr() + (n * C + c) * H * W;
                T* gwplane = gw.ptr() + (l * C + c) * P * Q;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t q = 0; q < Q; ++q) {
                        const T wv = wplane[p * Q + q];
                        T acc = T(0);
                        for (std::size_t ho = 0; ho < Ho; ++ho) {
                            const long hi = static_cast<long>(ho) * stride - pad +
                                            static_cast<long>(p);
                            if (hi < 0 || hi >= static_cast<long>(H)) continue;
                            const T* xrow = xplane + static_cast<std::size_t>(hi) * W;
                            T* gxrow = gxplane + static_cast<std::size_t>(hi) * W;
                            const T* grow = gplane + ho * Wo;
                            for (std::size_t wo = 0; wo < Wo; ++wo) {
                                const long wi = static_cast<long>(wo) * stride - pad +
                                                static_cast<long>(q);
                                if (wi < 0 || wi >= static_cast<long>(W)) continue;
                                acc += grow[wo] * xrow[wi];
                                gxrow[wi] += grow[wo] * wv;
                            }
                        }
                        gwplane[p * Q + q] += acc;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

// Subgradient at exactly zero is taken as zero.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i)
        gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> maxpool2(const TensorT<T>& x, std::vector<std::size_t>* argmax = nullptr) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw ConfigError("maxpool2: spatial dims must be even");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Ho = H / 2, Wo = W / 2;
    TensorT<T> y({N, C, Ho, Wo});
    if (argmax) argmax->assign(y.size(), 0);
    const T* xd = x.ptr();
    std::size_t oi = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* plane = xd + nc * H * W;
        for (std::size_t ho = 0; ho < Ho; ++ho) {
            for (std::size_t wo = 0; wo < Wo; ++wo, ++oi) {
                // First-encountered index wins ties (row-major scan).
                std::size_t best = (2 * ho) * W + 2 * wo;
                T bv = plane[best];
                const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (plane[cand[k]] > bv) {
                        bv = plane[cand[k]];
                        best = cand[k];
                    }
                }
                y.data[oi] = bv;
                if (argmax) (*argmax)[oi] = nc * H * W + best;
            }
        }
    }
    return y;
}

template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& x, const TensorT<T>& gy,
                             const std::vector<std::size_t>& argmax) {
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < gy.size(); ++i)
        gx.data[argmax[i]] += gy.data[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization (per channel; rank-4 NCHW or rank-2 ND inputs)
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormCache {
    TensorT<T> xhat;          // normalized input
    std::vector<T> inv_std;   // 1/sqrt(var + eps) per channel
    std::size_t channels = 0;
    std::size_t group = 0;    // values normalized together per channel
};

namespace detail {
inline void bn_geometry(const std::vector<std::size_t>& shape, std::size_t& channels,
                        std::size_t& spatial) {
    if (shape.size() == 4) {
        channels = shape[1];
        spatial = shape[2] * shape[3];
    } else if (shape.size() == 2) {
        channels = shape[1];
        spatial = 1;
    } else {
        throw ConfigError("batchnorm: expected rank-2 or rank-4 input");
    }
}
}  // namespace detail

template <typename T>
TensorT<T> batchnorm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                     TensorT<T>& running_mean, TensorT<T>& running_var, bool training,
                     T momentum, T eps, BatchNormCache<T>* cache = nullptr) {
    std::size_t C, S;
    detail::bn_geometry(x.shape, C, S);
    const std::size_t N = x.dim(0);
    const std::size_t m = N * S;
    if (training && N < 2)
        throw ConfigError("batchnorm: training mode needs batch size >= 2");

    TensorT<T> y(x.shape);
    std::vector<T> mean(C), var(C);
    if (training) {
        for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x.ptr() + (n * C + c) * S;
                for (std::size_t s = 0; s < S; ++s) acc += p[s];
            }
            mean[c] = acc / static_cast<T>(m);
            T vacc = T(0);
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x.ptr() + (n * C + c) * S;
                for (std::size_t s = 0; s < S; ++s) {
                    const T d = p[s] - mean[c];
                    vacc += d * d;
                }
            }
            var[c] = vacc / static_cast<T>(m);
            running_mean.data[c] = momentum * running_mean.data[c] + (T(1) - momentum) * mean[c];
            running_var.data[c] = momentum * running_var.data[c] + (T(1) - momentum) * var[c];
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = running_mean.data[c];
            var[c] = running_var.data[c];
        }
    }

    if (cache) {
        cache->xhat = TensorT<T>(x.shape);
        cache->inv_std.assign(C, T(0));
        cache->channels = C;
        cache->group = m;
    }
    for (std::size_t c = 0; c < C; ++c) {
        const T inv = T(1) / std::sqrt(var[c] + eps);
        if (cache) cache->inv_std[c] = inv;
        for (std::size_t n = 0; n < N; ++n) {
            const T* p = x.ptr() + (n * C + c) * S;
            T* q = y.ptr() + (n * C + c) * S;
            T* xh = cache ? cache->xhat.ptr() + (n * C + c) * S : nullptr;
            for (std::size_t s = 0; s < S; ++s) {
                const T h = (p[s] - mean[c]) * inv;
                if (xh) xh[s] = h;
                q[s] = gamma.data[c] * h + beta.data[c];
            }
        }
    }
    return y;
}

template <typename T>
void batchnorm_backward(const TensorT<T>& gy, const TensorT<T>& gamma,
                        const BatchNormCache<T>& cache, TensorT<T>& gx,
                        TensorT<T>& ggamma, TensorT<T>& gbeta) {
    std::size_t C, S;
    detail::bn_geometry(gy.shape, C, S);
    const std::size_t N = gy.dim(0);
    const T m = static_cast<T>(cache.group);

    gx = TensorT<T>(gy.shape);
    ggamma = TensorT<T>({C});
    gbeta = TensorT<T>({C});
    for (std::size_t c = 0; c < C; ++c) {
        T sum_g = T(0), sum_gx = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* g = gy.ptr() + (n * C + c) * S;
            const T* xh = cache.xhat.ptr() + (n * C + c) * S;
            for (std::size_t s = 0; s < S; ++s) {
                sum_g += g[s];
                sum_gx += g[s] * xh[s];
            }
        }
        ggamma.data[c] = sum_gx;
        gbeta.data[c] = sum_g;
        const T scale = gamma.data[c] * cache.inv_std[c];
        for (std::size_t n = 0; n < N; ++n) {
            const T* g = gy.ptr() + (n * C + c) * S;
            const T* xh = cache.xhat.ptr() + (n * C + c) * S;
            T* o = gx.ptr() + (n * C + c) * S;
            for (std::size_t s = 0; s < S; ++s)
                o[s] = scale * (g[s] - sum_g / m - xh[s] * sum_gx / m);
        }
    }
}

// ---------------------------------------------------------------------------
// Fully connected: y = x W^T + b, W is (out, in)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> fully_connected(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& b) {
    if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(1))
        throw ConfigError("fully_connected: shape mismatch");
    const std::size_t N = x.dim(0), in = x.dim(1), out = W.dim(0);
    TensorT<T> y({N, out});
    for (std::size_t n = 0; n < N; ++n) {
        const T* xr = x.ptr() + n * in;
        for (std::size_t o = 0; o < out; ++o) {
            const T* wr = W.ptr() + o * in;
            T acc = b.size() ? b.data[o] : T(0);
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
            y.at2(n, o) = acc;
        }
    }
    return y;
}

template <typename T>
void fully_connected_backward(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& gy,
                              TensorT<T>& gx, TensorT<T>& gW, TensorT<T>& gb) {
    const std::size_t N = x.dim(0), in = x.dim(1), out = W.dim(0);
    gx = TensorT<T>(x.shape);
    gW = TensorT<T>(W.shape);
    gb = TensorT<T>({out});
    for (std::size_t n = 0; n < N; ++n) {
        const T* xr = x.ptr() + n * in;
        T* gxr = gx.ptr() + n * in;
        for (std::size_t o = 0; o < out; ++o) {
            const T g = gy.at2(n, o);
            gb.data[o] += g;
            const T* wr = W.ptr() + o * in;
            T* gwr = gW.ptr() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                gxr[i] += g * wr[i];
                gwr[i] += g * xr[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Global average pooling: (N,C,H,W) -> (N,C)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
    if (x.rank() != 4)
        throw ConfigError("global_avg_pool: expected rank-4 input");
    const std::size_t N = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
    TensorT<T> y({N, C});
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* p = x.ptr() + nc * S;
        T acc = T(0);
        for (std::size_t s = 0; s < S; ++s) acc += p[s];
        y.data[nc] = acc / static_cast<T>(S);
    }
    return y;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const std::vector<std::size_t>& in_shape,
                                    const TensorT<T>& gy) {
    const std::size_t S = in_shape[2] * in_shape[3];
    TensorT<T> gx(in_shape);
    for (std::size_t nc = 0; nc < gy.size(); ++nc) {
        const T g = gy.data[nc] / static_cast<T>(S);
        T* p = gx.ptr() + nc * S;
        for (std::size_t s = 0; s < S; ++s) p[s] = g;
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Softmax (row-wise, max-subtracted for stability)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> softmax(const TensorT<T>& z) {
    if (z.rank() != 2)
        throw ConfigError("softmax: expected rank-2 logits");
    const std::size_t N = z.dim(0), K = z.dim(1);
    TensorT<T> p(z.shape);
    for (std::size_t n = 0; n < N; ++n) {
        const T* zr = z.ptr() + n * K;
        T* pr = p.ptr() + n * K;
        T zmax = zr[0];
        for (std::size_t k = 1; k < K; ++k) zmax = std::max(zmax, zr[k]);
        T sum = T(0);
        for (std::size_t k = 0; k < K; ++k) {
            pr[k] = std::exp(zr[k] - zmax);
            sum += pr[k];
        }
        for (std::size_t k = 0; k < K; ++k) pr[k] /= sum;
    }
    return p;
}

}  // namespace bandsel
