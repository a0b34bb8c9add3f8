#pragma once

// Data-parallel compute kernels. Matrices are Eigen column-major with one
// token / pixel per column; feature maps are (C, B*H*W) with column index
// (b*H + y)*W + x.
//
// The kernels in `seqfake::kernels` are OpenMP-parallel and write disjoint
// outputs per thread, so results do not depend on the thread count. The
// naive loops in `seqfake::kernels::reference` are kept as test oracles and
// benchmark baselines.

#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace seqfake::kernels {

struct ConvGeometry {
    int channels = 0;  // input channels
    int batch = 1;
    int height = 0;
    int width = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 0;

    int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    Eigen::Index col_rows() const { return static_cast<Eigen::Index>(kernel) * kernel * channels; }
    Eigen::Index col_cols() const { return static_cast<Eigen::Index>(batch) * out_height() * out_width(); }
};

// Column layout of im2col: row (ky*k + kx)*C + c, so each kernel tap copies
// one contiguous channel vector.
template <class T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
    const int ho = g.out_height(), wo = g.out_width(), C = g.channels, k = g.kernel;
    const Eigen::Index rows = g.col_rows();
    const auto n_out = static_cast<std::ptrdiff_t>(g.col_cols());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_out; ++n) {
        const int b = static_cast<int>(n / (ho * wo));
        const int oy = static_cast<int>((n / wo) % ho);
        const int ox = static_cast<int>(n % wo);
        T* dst = cols + n * rows;
        for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                T* tap = dst + (ky * k + kx) * C;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) {
                    std::memset(tap, 0, sizeof(T) * static_cast<std::size_t>(C));
                } else {
                    const T* src = in + (static_cast<std::ptrdiff_t>(b * g.height + iy) * g.width + ix) * C;
                    std::memcpy(tap, src, sizeof(T) * static_cast<std::size_t>(C));
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back into `in_grad` (accumulates).
// Parallel over batch items, whose input regions are disjoint.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* in_grad) {
    const int ho = g.out_height(), wo = g.out_width(), C = g.channels, k = g.kernel;
    const Eigen::Index rows = g.col_rows();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < g.batch; ++b) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t n = (static_cast<std::ptrdiff_t>(b) * ho + oy) * wo + ox;
                const T* src = cols + n * rows;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.width) continue;
                        T* dst = in_grad + (static_cast<std::ptrdiff_t>(b * g.height + iy) * g.width + ix) * C;
                        const T* tap = src + (ky * k + kx) * C;
                        for (int c = 0; c < C; ++c) dst[c] += tap[c];
                    }
                }
            }
        }
    }
}

struct AttentionShape {
    int batch = 1;
    int queries = 1;  // tokens per item on the query side
    int keys = 1;     // tokens per item on the key side
    int heads = 1;
    int head_dim = 1;
    bool causal = false;               // requires queries == keys
    std::span<const int> key_lengths;  // optional per-item valid key count

    int valid_keys(int b) const { return key_lengths.empty() ? keys : key_lengths[static_cast<std::size_t>(b)]; }
};

// Score/weight layout: (keys, batch*heads*queries), column (b*heads + h)*queries + q.
// Each column of `weights` is a softmax over keys.
//
// out = V softmax(K^T Q * scale + bias) per item and head.
template <class T>
void attention_forward(const T* q, const T* k, const T* v, const T* bias, const AttentionShape& s, T scale,
                       T* out, T* weights) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using CMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using MMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
    const int C = s.heads * s.head_dim;
    const int jobs = s.batch * s.heads;
#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int b = job / s.heads, h = job % s.heads;
        const std::ptrdiff_t qoff = static_cast<std::ptrdiff_t>(b) * s.queries * C + h * s.head_dim;
        const std::ptrdiff_t koff = static_cast<std::ptrdiff_t>(b) * s.keys * C + h * s.head_dim;
        CMap Q(q + qoff, s.head_dim, s.queries, Eigen::OuterStride<>(C));
        CMap K(k + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C));
        CMap V(v + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C));
        MMap O(out + qoff, s.head_dim, s.queries, Eigen::OuterStride<>(C));
        const std::ptrdiff_t woff = static_cast<std::ptrdiff_t>(job) * s.queries * s.keys;
        MMap A(weights + woff, s.keys, s.queries, Eigen::OuterStride<>(s.keys));
        A.noalias() = (K.transpose() * Q) * scale;
        if (bias) A += CMap(bias + woff, s.keys, s.queries, Eigen::OuterStride<>(s.keys));
        const int valid = s.valid_keys(b);
        for (int qi = 0; qi < s.queries; ++qi) {
            const int limit = s.causal ? std::min(valid, qi + 1) : valid;
            auto col = A.col(qi);
            T mx = col.head(limit).maxCoeff();
            T sum = 0;
            for (int j = 0; j < limit; ++j) {
                col[j] = std::exp(col[j] - mx);
                sum += col[j];
            }
            col.head(limit) /= sum;
            col.tail(s.keys - limit).setZero();
        }
        O.noalias() = V * A;
    }
}

// Accumulates into dq, dk, dv (and dbias when non-null).
template <class T>
void attention_backward(const T* q, const T* k, const T* v, const T* weights, const T* dout,
                        const AttentionShape& s, T scale, T* dq, T* dk, T* dv, T* dbias) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using CMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using MMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
    const int C = s.heads * s.head_dim;
    const int jobs = s.batch * s.heads;
#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int b = job / s.heads, h = job % s.heads;
        const std::ptrdiff_t qoff = static_cast<std::ptrdiff_t>(b) * s.queries * C + h * s.head_dim;
        const std::ptrdiff_t koff = static_cast<std::ptrdiff_t>(b) * s.keys * C + h * s.head_dim;
        const std::ptrdiff_t woff = static_cast<std::ptrdiff_t>(job) * s.queries * s.keys;
        CMap Q(q + qoff, s.head_dim, s.queries, Eigen::OuterStride<>(C));
        CMap K(k + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C));
        CMap V(v + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C));
        CMap A(weights + woff, s.keys, s.queries, Eigen::OuterStride<>(s.keys));
        CMap dO(dout + qoff, s.head_dim, s.queries, Eigen::OuterStride<>(C));
        MMap(dv + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C)).noalias() += dO * A.transpose();
        Mat dA = V.transpose() * dO;
        // Softmax backward per query column; masked entries have A = 0.
        Mat dS = A.cwiseProduct(dA);
        const auto colsum = dS.colwise().sum().eval();
        dS -= A * colsum.asDiagonal();
        if (dbias) MMap(dbias + woff, s.keys, s.queries, Eigen::OuterStride<>(s.keys)) += dS;
        dS *= scale;
        MMap(dk + koff, s.head_dim, s.keys, Eigen::OuterStride<>(C)).noalias() += Q * dS.transpose();
        MMap(dq + qoff, s.head_dim, s.queries, Eigen::OuterStride<>(C)).noalias() += K * dS;
    }
}

// Per-column layer normalization. mean/rstd have one entry per column.
template <class T>
void layer_norm_forward(const T* x, int rows, std::ptrdiff_t cols, const T* gamma, const T* beta, T eps, T* y,
                        T* mean, T* rstd) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
        const T* xc = x + c * rows;
        T m = 0;
        for (int r = 0; r < rows; ++r) m += xc[r];
        m /= rows;
        T var = 0;
        for (int r = 0; r < rows; ++r) var += (xc[r] - m) * (xc[r] - m);
        var /= rows;
        const T rs = T(1) / std::sqrt(var + eps);
        mean[c] = m;
        rstd[c] = rs;
        T* yc = y + c * rows;
        for (int r = 0; r < rows; ++r) yc[r] = (xc[r] - m) * rs * gamma[r] + beta[r];
    }
}

// Accumulates dx (when non-null). dgamma/dbeta are reduced serially over
// columns afterwards so the summation order is fixed.
template <class T>
void layer_norm_backward(const T* x, int rows, std::ptrdiff_t cols, const T* gamma, const T* mean, const T* rstd,
                         const T* dy, T* dx, T* dgamma, T* dbeta) {
    if (dx) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            const T* xc = x + c * rows;
            const T* dyc = dy + c * rows;
            T sum_g = 0, sum_gx = 0;
            for (int r = 0; r < rows; ++r) {
                const T xhat = (xc[r] - mean[c]) * rstd[c];
                const T g = dyc[r] * gamma[r];
                sum_g += g;
                sum_gx += g * xhat;
            }
            T* dxc = dx + c * rows;
            for (int r = 0; r < rows; ++r) {
                const T xhat = (xc[r] - mean[c]) * rstd[c];
                dxc[r] += rstd[c] * (dyc[r] * gamma[r] - (sum_g + xhat * sum_gx) / rows);
            }
        }
    }
    if (dgamma || dbeta) {
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            const T* xc = x + c * rows;
            const T* dyc = dy + c * rows;
            for (int r = 0; r < rows; ++r) {
                if (dgamma) dgamma[r] += dyc[r] * (xc[r] - mean[c]) * rstd[c];
                if (dbeta) dbeta[r] += dyc[r];
            }
        }
    }
}

namespace reference {

// Direct convolution. weight is (Cout, k*k*Cin) in im2col row order,
// out is (Cout, B*Ho*Wo).
template <class T>
void conv2d_forward(const T* in, const T* weight, const T* bias, int out_channels, const ConvGeometry& g, T* out) {
    const int ho = g.out_height(), wo = g.out_width(), C = g.channels, k = g.kernel;
    const int K = k * k * C;
    for (int b = 0; b < g.batch; ++b) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t n = (static_cast<std::ptrdiff_t>(b) * ho + oy) * wo + ox;
                for (int o = 0; o < out_channels; ++o) {
                    T acc = bias ? bias[o] : T(0);
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                            for (int c = 0; c < C; ++c) {
                                const T w = weight[o + static_cast<std::ptrdiff_t>(out_channels) * ((ky * k + kx) * C + c)];
                                acc += w * in[(static_cast<std::ptrdiff_t>(b * g.height + iy) * g.width + ix) * C + c];
                            }
                        }
                    }
                    out[o + n * out_channels] = acc;
                }
            }
        }
    }
    (void)K;
}

// Plain triple loops, same layouts and masking as kernels::attention_forward.
template <class T>
void attention_forward(const T* q, const T* k, const T* v, const T* bias, const AttentionShape& s, T scale,
                       T* out, T* weights) {
    const int C = s.heads * s.head_dim;
    std::vector<T> scores(static_cast<std::size_t>(s.keys));
    for (int b = 0; b < s.batch; ++b) {
        for (int h = 0; h < s.heads; ++h) {
            const int job = b * s.heads + h;
            for (int qi = 0; qi < s.queries; ++qi) {
                const int valid = s.valid_keys(b);
                const int limit = s.causal ? std::min(valid, qi + 1) : valid;
                T mx = -std::numeric_limits<T>::infinity();
                for (int j = 0; j < limit; ++j) {
                    T dot = 0;
                    for (int d = 0; d < s.head_dim; ++d) {
                        dot += k[(static_cast<std::ptrdiff_t>(b) * s.keys + j) * C + h * s.head_dim + d] *
                               q[(static_cast<std::ptrdiff_t>(b) * s.queries + qi) * C + h * s.head_dim + d];
                    }
                    scores[static_cast<std::size_t>(j)] = dot * scale;
                    if (bias) scores[static_cast<std::size_t>(j)] += bias[(static_cast<std::ptrdiff_t>(job) * s.queries + qi) * s.keys + j];
                    mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
                }
                T sum = 0;
                for (int j = 0; j < limit; ++j) sum += std::exp(scores[static_cast<std::size_t>(j)] - mx);
                T* w = weights + (static_cast<std::ptrdiff_t>(job) * s.queries + qi) * s.keys;
                for (int j = 0; j < s.keys; ++j) w[j] = j < limit ? std::exp(scores[static_cast<std::size_t>(j)] - mx) / sum : T(0);
                for (int d = 0; d < s.head_dim; ++d) {
                    T acc = 0;
                    for (int j = 0; j < limit; ++j) {
                        acc += w[j] * v[(static_cast<std::ptrdiff_t>(b) * s.keys + j) * C + h * s.head_dim + d];
                    }
                    out[(static_cast<std::ptrdiff_t>(b) * s.queries + qi) * C + h * s.head_dim + d] = acc;
                }
            }
        }
    }
}

}  // namespace reference

}  // namespace seqfake::kernels
