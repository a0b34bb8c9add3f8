#pragma once

#include <random>
#include <span>
#include <vector>

#include "seqfake/kernels/kernels.hpp"
#include "seqfake/nn/tape.hpp"

namespace seqfake::nn {

// Differentiable operations on a Tape. Column-major: one token per column.
// An invalid Var (id < 0) passed for an optional input means "absent".

template <class T> Var linear(Tape<T>& t, Var x, Var weight, Var bias);
template <class T> Var matmul(Tape<T>& t, Var a, Var b, bool transpose_a = false, bool transpose_b = false);
template <class T> Var add(Tape<T>& t, Var a, Var b);
template <class T> Var add_constant(Tape<T>& t, Var a, const Matrix<T>& c);
template <class T> Var scale(Tape<T>& t, Var a, T factor);
template <class T> Var relu(Tape<T>& t, Var a);
template <class T> Var sigmoid(Tape<T>& t, Var a);
template <class T> Var tanh(Tape<T>& t, Var a);
// exp(a) clamped to [lo, hi]; zero gradient where the clamp is active.
template <class T> Var exp_clamped(Tape<T>& t, Var a, T lo, T hi);
template <class T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5));
template <class T> Var dropout(Tape<T>& t, Var x, T p, std::mt19937_64& rng);

// x is (C_in, B*H*W); weight is (C_out, k*k*C_in) in im2col row order.
template <class T> Var conv2d(Tape<T>& t, Var x, Var weight, Var bias, const kernels::ConvGeometry& g);

struct AttentionOptions {
    int batch = 1;
    int queries = 1;
    int keys = 1;
    int heads = 1;
    bool causal = false;
    std::vector<int> key_lengths;  // empty: all keys valid
};

// Multi-head scaled dot-product attention, out = V softmax(K^T Q / sqrt(d) + bias).
// q is (C, B*Tq); k, v are (C, B*Tk); bias (optional) is (Tk, B*heads*Tq).
// When `weights_out` is non-null the attention weights are copied there.
template <class T>
Var attention(Tape<T>& t, Var q, Var k, Var v, Var bias, const AttentionOptions& opt,
              Matrix<T>* weights_out = nullptr);

struct SecaMapShape {
    int batch = 1;
    int queries = 1;  // decoder tokens per item
    int heads = 1;
    int height = 1;   // feature grid
    int width = 1;
    double lambda = 4.0;
};

// Log of the Gaussian spatial weight maps, laid out as an attention bias
// (H*W, B*heads*Tq). centers is (2, B*Tq) with rows (t_h, t_w) in (0,1);
// offsets (optional) is (2*heads, B*Tq); scales is (2*heads, B*Tq) or
// (2, B*Tq) shared by all heads, already positive, in grid units.
template <class T>
Var seca_log_maps(Tape<T>& t, Var centers, Var offsets, Var scales, const SecaMapShape& s);

template <class T> Var gather_columns(Tape<T>& t, Var x, std::vector<int> index);
// Mean of each consecutive block of `block` columns: (R, B*block) -> (R, B).
template <class T> Var mean_pool(Tape<T>& t, Var x, int block);
template <class T> Var l2_normalize_columns(Tape<T>& t, Var x, T eps = T(1e-12));
// Columns of `table` selected by id: (C, V) -> (C, ids.size()).
template <class T> Var embedding(Tape<T>& t, Var table, std::vector<int> ids);

// Mean cross entropy over columns whose target is >= 0. Returns 1x1.
template <class T> Var softmax_cross_entropy(Tape<T>& t, Var logits, std::vector<int> targets);

// Symmetric InfoNCE over a (K, K) similarity matrix whose diagonal holds the
// matched pairs. When `groups` is non-empty, off-diagonal entries whose row
// and column share a group id are left out of the denominators. Returns 1x1.
template <class T> Var info_nce(Tape<T>& t, Var similarity, T tau, std::vector<int> groups = {});

// Sum of 1x1 values.
template <class T> Var sum_scalars(Tape<T>& t, std::span<const Var> terms);

}  // namespace seqfake::nn
