#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "lcz/rng.hpp"
#include "lcz/tensor.hpp"

namespace lcz {

// ---------------------------------------------------------------------------
// GEMM kernels. All matrices row-major, all kernels accumulate (C += ...),
// callers zero C when they need a plain product.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void gemm_nn_ref(int i0, int i1, int j0, int j1, int k, const T* a, const T* b, T* c, int ldc) {
    for (int i = i0; i < i1; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * ldc;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * ldc;
            for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace detail

/// C (m x n) += A (m x k) * B (k x n).
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
    constexpr int MR = 4;
    constexpr int NR = 32;
    const int mm = m - m % MR;
    const int nn = n - n % NR;
    for (int i = 0; i < mm; i += MR) {
        for (int j = 0; j < nn; j += NR) {
            T acc[MR][NR] = {};
            const T* a0 = a + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const T* brow = b + static_cast<std::size_t>(p) * n + j;
                T bv[NR];
                for (int jj = 0; jj < NR; ++jj) bv[jj] = brow[jj];
                for (int ii = 0; ii < MR; ++ii) {
                    T av = a0[static_cast<std::size_t>(ii) * k + p];
                    for (int jj = 0; jj < NR; ++jj) acc[ii][jj] += av * bv[jj];
                }
            }
            for (int ii = 0; ii < MR; ++ii) {
                T* crow = c + static_cast<std::size_t>(i + ii) * n + j;
                for (int jj = 0; jj < NR; ++jj) crow[jj] += acc[ii][jj];
            }
        }
    }
    if (nn < n) detail::gemm_nn_ref(0, mm, nn, n, k, a, b, c, n);
    if (mm < m) detail::gemm_nn_ref(mm, m, 0, n, k, a, b, c, n);
}

/// C (m x n) += A (m x k) * B^T, with B stored row-major (n x k).
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
    constexpr int TI = 4;
    for (int i0 = 0; i0 < m; i0 += TI) {
        int i1 = std::min(i0 + TI, m);
        for (int j0 = 0; j0 < n; j0 += TI) {
            int j1 = std::min(j0 + TI, n);
            for (int i = i0; i < i1; ++i) {
                const T* arow = a + static_cast<std::size_t>(i) * k;
                T* crow = c + static_cast<std::size_t>(i) * n;
                for (int j = j0; j < j1; ++j) {
                    const T* brow = b + static_cast<std::size_t>(j) * k;
                    T acc = T(0);
                    for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                    crow[j] += acc;
                }
            }
        }
    }
}

/// C (m x n) += A^T * B, with A stored row-major (k x m).
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<std::size_t>(p) * m;
        const T* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            T av = arow[i];
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for same-padded stride-1 convolution.
// col layout: (c*k*k) rows by (h*w) columns, row-major.
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* x, int c, int h, int w, int ksize, T* col) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::size_t r = 0;
    for (int ic = 0; ic < c; ++ic) {
        const T* xc = x + static_cast<std::size_t>(ic) * plane;
        for (int ki = 0; ki < ksize; ++ki) {
            for (int kj = 0; kj < ksize; ++kj, ++r) {
                T* out = col + r * plane;
                const int di = ki - pad, dj = kj - pad;
                for (int oh = 0; oh < h; ++oh) {
                    const int ih = oh + di;
                    T* orow = out + static_cast<std::size_t>(oh) * w;
                    if (ih < 0 || ih >= h) {
                        std::fill(orow, orow + w, T(0));
                        continue;
                    }
                    const T* xrow = xc + static_cast<std::size_t>(ih) * w;
                    const int j_lo = std::max(0, -dj);
                    const int j_hi = std::min(w, w - dj);
                    for (int j = 0; j < j_lo; ++j) orow[j] = T(0);
                    for (int j = j_lo; j < j_hi; ++j) orow[j] = xrow[j + dj];
                    for (int j = j_hi; j < w; ++j) orow[j] = T(0);
                }
            }
        }
    }
}

/// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* col, int c, int h, int w, int ksize, T* x) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::fill(x, x + static_cast<std::size_t>(c) * plane, T(0));
    std::size_t r = 0;
    for (int ic = 0; ic < c; ++ic) {
        T* xc = x + static_cast<std::size_t>(ic) * plane;
        for (int ki = 0; ki < ksize; ++ki) {
            for (int kj = 0; kj < ksize; ++kj, ++r) {
                const T* in = col + r * plane;
                const int di = ki - pad, dj = kj - pad;
                for (int oh = 0; oh < h; ++oh) {
                    const int ih = oh + di;
                    if (ih < 0 || ih >= h) continue;
                    T* xrow = xc + static_cast<std::size_t>(ih) * w;
                    const T* irow = in + static_cast<std::size_t>(oh) * w;
                    const int j_lo = std::max(0, -dj);
                    const int j_hi = std::min(w, w - dj);
                    for (int j = j_lo; j < j_hi; ++j) xrow[j + dj] += irow[j];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, same padding, odd kernel).
// Kernel layout (out_ch, in_ch, k, k) row-major, so each output channel's
// filter is one contiguous GEMM row.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvLayer {
    int in_ch = 0, out_ch = 0, ksize = 0;
    std::vector<T> kernel;
    std::vector<T> bias;

    ConvLayer() = default;
    ConvLayer(int in, int out, int k)
        : in_ch(in), out_ch(out), ksize(k),
          kernel(static_cast<std::size_t>(out) * in * k * k, T(0)), bias(out, T(0)) {
        require(k % 2 == 1, ErrorKind::invalid_argument, "conv kernel size must be odd");
    }
};

template <typename T>
struct ConvGrads {
    std::vector<T> kernel;
    std::vector<T> bias;

    void init_like(const ConvLayer<T>& l) {
        kernel.assign(l.kernel.size(), T(0));
        bias.assign(l.bias.size(), T(0));
    }
};

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvLayer<T>& l) {
    require(x.c == l.in_ch, ErrorKind::dimension, "conv input channel mismatch");
    Tensor4<T> y(x.n, l.out_ch, x.h, x.w);
    const int ckk = l.in_ch * l.ksize * l.ksize;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    std::vector<T> col(static_cast<std::size_t>(ckk) * plane);
    for (int in = 0; in < x.n; ++in) {
        im2col(x.item(in), x.c, x.h, x.w, l.ksize, col.data());
        T* out = y.item(in);
        for (int oc = 0; oc < l.out_ch; ++oc)
            std::fill(out + oc * plane, out + (oc + 1) * plane, l.bias[oc]);
        gemm_nn(l.out_ch, static_cast<int>(plane), ckk, l.kernel.data(), col.data(), out);
    }
    return y;
}

/// Accumulates parameter gradients into g, returns grad wrt x.
template <typename T>
Tensor4<T> conv2d_backward(const Tensor4<T>& x, const ConvLayer<T>& l, const Tensor4<T>& gy,
                           ConvGrads<T>& g) {
    require(gy.n == x.n && gy.c == l.out_ch && gy.h == x.h && gy.w == x.w, ErrorKind::dimension,
            "conv grad shape mismatch");
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    const int ckk = l.in_ch * l.ksize * l.ksize;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    std::vector<T> col(static_cast<std::size_t>(ckk) * plane);
    std::vector<T> gcol(static_cast<std::size_t>(ckk) * plane);
    std::vector<T> wt(static_cast<std::size_t>(ckk) * l.out_ch);
    for (int oc = 0; oc < l.out_ch; ++oc)
        for (int r = 0; r < ckk; ++r)
            wt[static_cast<std::size_t>(r) * l.out_ch + oc] = l.kernel[static_cast<std::size_t>(oc) * ckk + r];
    for (int in = 0; in < x.n; ++in) {
        const T* gout = gy.item(in);
        for (int oc = 0; oc < l.out_ch; ++oc) {
            T s = T(0);
            const T* row = gout + oc * plane;
            for (std::size_t j = 0; j < plane; ++j) s += row[j];
            g.bias[oc] += s;
        }
        im2col(x.item(in), x.c, x.h, x.w, l.ksize, col.data());
        gemm_nt(l.out_ch, ckk, static_cast<int>(plane), gout, col.data(), g.kernel.data());
        std::fill(gcol.begin(), gcol.end(), T(0));
        gemm_nn(ckk, static_cast<int>(plane), l.out_ch, wt.data(), gout, gcol.data());
        col2im(gcol.data(), x.c, x.h, x.w, l.ksize, gx.item(in));
    }
    return gx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties route to the first maximum in row-major
// window order.
// ---------------------------------------------------------------------------

template <typename T>
struct PoolCache {
    std::vector<std::int32_t> argmax; // flat offset within the item block
};

template <typename T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x, PoolCache<T>& cache) {
    require(x.h % 2 == 0 && x.w % 2 == 0, ErrorKind::dimension, "pool input must have even height and width");
    Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
    cache.argmax.resize(y.size());
    const int hw = x.h * x.w;
    std::size_t oi = 0;
    for (int in = 0; in < x.n; ++in) {
        const T* xi = x.item(in);
        for (int ic = 0; ic < x.c; ++ic) {
            const T* plane = xi + static_cast<std::size_t>(ic) * hw;
            const std::int32_t base = ic * hw;
            for (int oh = 0; oh < y.h; ++oh) {
                for (int ow = 0; ow < y.w; ++ow, ++oi) {
                    const int r = oh * 2, c = ow * 2;
                    std::int32_t best = base + r * x.w + c;
                    T bv = plane[r * x.w + c];
                    const std::int32_t cand[3] = {base + r * x.w + c + 1, base + (r + 1) * x.w + c,
                                                  base + (r + 1) * x.w + c + 1};
                    for (std::int32_t idx : cand) {
                        T v = plane[idx - base];
                        if (v > bv) {
                            bv = v;
                            best = idx;
                        }
                    }
                    y.data[oi] = bv;
                    cache.argmax[oi] = best;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> maxpool2_backward(const Tensor4<T>& x, const Tensor4<T>& gy, const PoolCache<T>& cache) {
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    std::size_t oi = 0;
    const std::size_t item_elems = static_cast<std::size_t>(x.c) * x.h * x.w;
    for (int in = 0; in < gy.n; ++in) {
        T* gxi = gx.data.data() + in * item_elems;
        const std::size_t count = static_cast<std::size_t>(gy.c) * gy.h * gy.w;
        for (std::size_t j = 0; j < count; ++j, ++oi) gxi[cache.argmax[oi]] += gy.data[oi];
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (n, h, w) per channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormLayer {
    int channels = 0;
    T eps = T(1e-5);
    T momentum = T(0.9);
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;

    BatchNormLayer() = default;
    explicit BatchNormLayer(int c)
        : channels(c), gamma(c, T(1)), beta(c, T(0)), running_mean(c, T(0)), running_var(c, T(1)) {}
};

template <typename T>
struct BatchNormGrads {
    std::vector<T> gamma, beta;

    void init_like(const BatchNormLayer<T>& l) {
        gamma.assign(l.gamma.size(), T(0));
        beta.assign(l.beta.size(), T(0));
    }
};

template <typename T>
struct BnCache {
    Tensor4<T> xhat;
    std::vector<T> inv_std; // per channel, batch stats in train mode, running in eval
    bool train = false;
};

/// Train mode uses batch statistics (population variance) and updates the
/// running estimates in place; eval mode uses the stored running estimates.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormLayer<T>& l, bool train, BnCache<T>& cache) {
    require(x.c == l.channels, ErrorKind::dimension, "batchnorm channel mismatch");
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    const std::size_t m = static_cast<std::size_t>(x.n) * plane;
    require(!train || m >= 2, ErrorKind::invalid_argument, "batchnorm train mode needs at least 2 values per channel");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    cache.xhat = Tensor4<T>(x.n, x.c, x.h, x.w);
    cache.inv_std.assign(x.c, T(0));
    cache.train = train;
    for (int ic = 0; ic < x.c; ++ic) {
        T mean, var;
        if (train) {
            double s = 0.0;
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.item(in) + ic * plane;
                for (std::size_t j = 0; j < plane; ++j) s += p[j];
            }
            mean = static_cast<T>(s / static_cast<double>(m));
            double q = 0.0;
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.item(in) + ic * plane;
                for (std::size_t j = 0; j < plane; ++j) {
                    double d = static_cast<double>(p[j]) - static_cast<double>(mean);
                    q += d * d;
                }
            }
            var = static_cast<T>(q / static_cast<double>(m));
            l.running_mean[ic] = l.momentum * l.running_mean[ic] + (T(1) - l.momentum) * mean;
            l.running_var[ic] = l.momentum * l.running_var[ic] + (T(1) - l.momentum) * var;
        } else {
            mean = l.running_mean[ic];
            var = l.running_var[ic];
        }
        const T inv = T(1) / std::sqrt(var + l.eps);
        cache.inv_std[ic] = inv;
        const T g = l.gamma[ic], b = l.beta[ic];
        for (int in = 0; in < x.n; ++in) {
            const T* p = x.item(in) + ic * plane;
            T* xh = cache.xhat.item(in) + ic * plane;
            T* yo = y.item(in) + ic * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                xh[j] = (p[j] - mean) * inv;
                yo[j] = g * xh[j] + b;
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormLayer<T>& l, const Tensor4<T>& gy, const BnCache<T>& cache,
                              BatchNormGrads<T>& g) {
    const Tensor4<T>& xhat = cache.xhat;
    require(gy.same_shape(xhat), ErrorKind::dimension, "batchnorm grad shape mismatch");
    Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);
    const std::size_t plane = static_cast<std::size_t>(gy.h) * gy.w;
    const std::size_t m = static_cast<std::size_t>(gy.n) * plane;
    for (int ic = 0; ic < gy.c; ++ic) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int in = 0; in < gy.n; ++in) {
            const T* dy = gy.item(in) + ic * plane;
            const T* xh = xhat.item(in) + ic * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                sum_dy += dy[j];
                sum_dy_xhat += static_cast<double>(dy[j]) * xh[j];
            }
        }
        g.beta[ic] += static_cast<T>(sum_dy);
        g.gamma[ic] += static_cast<T>(sum_dy_xhat);
        const T scale = l.gamma[ic] * cache.inv_std[ic];
        if (cache.train) {
            const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(m));
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(m));
            for (int in = 0; in < gy.n; ++in) {
                const T* dy = gy.item(in) + ic * plane;
                const T* xh = xhat.item(in) + ic * plane;
                T* dx = gx.item(in) + ic * plane;
                for (std::size_t j = 0; j < plane; ++j)
                    dx[j] = scale * (dy[j] - mean_dy - xh[j] * mean_dy_xhat);
            }
        } else {
            for (int in = 0; in < gy.n; ++in) {
                const T* dy = gy.item(in) + ic * plane;
                T* dx = gx.item(in) + ic * plane;
                for (std::size_t j = 0; j < plane; ++j) dx[j] = scale * dy[j];
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// ReLU. Backward masks on the forward output (y > 0 iff x > 0).
// ---------------------------------------------------------------------------

template <typename T>
void relu_inplace(std::vector<T>& v) {
    for (T& x : v)
        if (x < T(0)) x = T(0);
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    relu_inplace(y.data);
    return y;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& gy) {
    Tensor4<T> gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i)
        if (!(y.data[i] > T(0))) gx.data[i] = T(0);
    return gx;
}

// ---------------------------------------------------------------------------
// Dense (fully connected): y = x W^T + b, x is (batch, in), W is (out, in).
// ---------------------------------------------------------------------------

template <typename T>
struct DenseLayer {
    int in_dim = 0, out_dim = 0;
    std::vector<T> weight; // (out, in) row-major
    std::vector<T> bias;

    DenseLayer() = default;
    DenseLayer(int in, int out)
        : in_dim(in), out_dim(out), weight(static_cast<std::size_t>(out) * in, T(0)), bias(out, T(0)) {}
};

template <typename T>
struct DenseGrads {
    std::vector<T> weight, bias;

    void init_like(const DenseLayer<T>& l) {
        weight.assign(l.weight.size(), T(0));
        bias.assign(l.bias.size(), T(0));
    }
};

template <typename T>
Matrix<T> dense_forward(const Matrix<T>& x, const DenseLayer<T>& l) {
    require(x.cols == l.in_dim, ErrorKind::dimension, "dense input dimension mismatch");
    Matrix<T> y(x.rows, l.out_dim);
    for (int r = 0; r < x.rows; ++r)
        std::copy(l.bias.begin(), l.bias.end(), y.row(r));
    gemm_nt(x.rows, l.out_dim, l.in_dim, x.data.data(), l.weight.data(), y.data.data());
    return y;
}

template <typename T>
Matrix<T> dense_backward(const Matrix<T>& x, const DenseLayer<T>& l, const Matrix<T>& gy, DenseGrads<T>& g) {
    require(gy.rows == x.rows && gy.cols == l.out_dim, ErrorKind::dimension, "dense grad shape mismatch");
    for (int r = 0; r < gy.rows; ++r)
        for (int o = 0; o < l.out_dim; ++o) g.bias[o] += gy.at(r, o);
    gemm_tn(l.out_dim, l.in_dim, x.rows, gy.data.data(), x.data.data(), g.weight.data());
    Matrix<T> gx(x.rows, x.cols);
    gemm_nn(x.rows, l.in_dim, l.out_dim, gy.data.data(), l.weight.data(), gx.data.data());
    return gx;
}

// ---------------------------------------------------------------------------
// Inverted dropout: kept units scaled by 1/(1-p) at train time, eval is the
// identity. The cache stores the applied scale per unit (0 or 1/(1-p)).
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutCache {
    std::vector<T> scale;
};

template <typename T>
Matrix<T> dropout_forward(const Matrix<T>& x, double p, Rng& rng, DropoutCache<T>& cache) {
    require(p >= 0.0 && p < 1.0, ErrorKind::invalid_argument, "dropout probability must be in [0, 1)");
    Matrix<T> y = x;
    cache.scale.assign(x.data.size(), T(1));
    if (p == 0.0) return y;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        if (rng.uniform() < p) {
            cache.scale[i] = T(0);
            y.data[i] = T(0);
        } else {
            cache.scale[i] = keep_scale;
            y.data[i] *= keep_scale;
        }
    }
    return y;
}

template <typename T>
Matrix<T> dropout_backward(const Matrix<T>& gy, const DropoutCache<T>& cache) {
    Matrix<T> gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= cache.scale[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over the batch. Log-sum-exp stabilized.
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxResult {
    double loss = 0.0;
    Matrix<T> probs;
    Matrix<T> grad_logits; // d(mean loss)/d logits
};

template <typename T>
SoftmaxResult<T> softmax_cross_entropy(const Matrix<T>& logits, const std::vector<int>& labels) {
    require(static_cast<int>(labels.size()) == logits.rows, ErrorKind::dimension,
            "softmax label count mismatch");
    require(logits.rows > 0, ErrorKind::invalid_argument, "softmax needs a non-empty batch");
    SoftmaxResult<T> out;
    out.probs = Matrix<T>(logits.rows, logits.cols);
    out.grad_logits = Matrix<T>(logits.rows, logits.cols);
    double total = 0.0;
    const double inv_n = 1.0 / logits.rows;
    for (int r = 0; r < logits.rows; ++r) {
        const int label = labels[r];
        require(label >= 0 && label < logits.cols, ErrorKind::invalid_argument, "softmax label out of range");
        const T* z = logits.row(r);
        T zmax = z[0];
        for (int j = 1; j < logits.cols; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (int j = 0; j < logits.cols; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
        const double log_denom = std::log(denom);
        total += log_denom - static_cast<double>(z[label] - zmax);
        T* pr = out.probs.row(r);
        T* gr = out.grad_logits.row(r);
        for (int j = 0; j < logits.cols; ++j) {
            double p = std::exp(static_cast<double>(z[j] - zmax)) / denom;
            pr[j] = static_cast<T>(p);
            gr[j] = static_cast<T>(p * inv_n);
        }
        gr[label] -= static_cast<T>(inv_n);
    }
    out.loss = total * inv_n;
    return out;
}

} // namespace lcz
