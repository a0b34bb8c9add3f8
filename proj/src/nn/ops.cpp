#include "seqfake/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "seqfake/error.hpp"

namespace seqfake::nn {

namespace {

template <class T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

}  // namespace

template <class T>
Var linear(Tape<T>& t, Var x, Var weight, Var bias) {
    const auto& X = t.value(x);
    const auto& W = t.value(weight);
    if (W.cols() != X.rows()) throw ShapeError("linear: weight columns != input rows");
    Matrix<T> y(W.rows(), X.cols());
    y.noalias() = W * X;
    if (bias.valid()) y.colwise() += t.value(bias).col(0);
    const bool rg = t.requires_grad(x) || t.requires_grad(weight) || (bias.valid() && t.requires_grad(bias));
    return t.record(std::move(y), rg, [x, weight, bias](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(weight)) t.grad(weight).noalias() += dy * t.value(x).transpose();
        if (bias.valid() && t.requires_grad(bias)) t.grad(bias).col(0) += dy.rowwise().sum();
        if (t.requires_grad(x)) t.grad(x).noalias() += t.value(weight).transpose() * dy;
    });
}

template <class T>
Var matmul(Tape<T>& t, Var a, Var b, bool ta, bool tb) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    const auto inner_a = ta ? A.rows() : A.cols();
    const auto inner_b = tb ? B.cols() : B.rows();
    if (inner_a != inner_b) throw ShapeError("matmul: inner dimensions differ");
    Matrix<T> y;
    if (ta && tb) y = A.transpose() * B.transpose();
    else if (ta) y = A.transpose() * B;
    else if (tb) y = A * B.transpose();
    else y = A * B;
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.record(std::move(y), rg, [a, b, ta, tb](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        const auto& A = t.value(a);
        const auto& B = t.value(b);
        // y = op(A) op(B); d op(A) = dy op(B)^T, d op(B) = op(A)^T dy.
        if (t.requires_grad(a)) {
            Matrix<T> dopa = tb ? Matrix<T>(dy * B) : Matrix<T>(dy * B.transpose());
            if (ta) t.grad(a) += dopa.transpose();
            else t.grad(a) += dopa;
        }
        if (t.requires_grad(b)) {
            Matrix<T> dopb = ta ? Matrix<T>(A * dy) : Matrix<T>(A.transpose() * dy);
            if (tb) t.grad(b) += dopb.transpose();
            else t.grad(b) += dopb;
        }
    });
}

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "add");
    Matrix<T> y = t.value(a) + t.value(b);
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.record(std::move(y), rg, [a, b](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(a)) t.grad(a) += dy;
        if (t.requires_grad(b)) t.grad(b) += dy;
    });
}

template <class T>
Var add_constant(Tape<T>& t, Var a, const Matrix<T>& c) {
    require_same_shape(t.value(a), c, "add_constant");
    Matrix<T> y = t.value(a) + c;
    return t.record(std::move(y), t.requires_grad(a), [a](Tape<T>& t, Var self) { t.grad(a) += t.grad(self); });
}

template <class T>
Var scale(Tape<T>& t, Var a, T factor) {
    Matrix<T> y = t.value(a) * factor;
    return t.record(std::move(y), t.requires_grad(a),
                    [a, factor](Tape<T>& t, Var self) { t.grad(a) += t.grad(self) * factor; });
}

template <class T>
Var relu(Tape<T>& t, Var a) {
    Matrix<T> y = t.value(a).cwiseMax(T(0));
    return t.record(std::move(y), t.requires_grad(a), [a](Tape<T>& t, Var self) {
        t.grad(a).array() += t.grad(self).array() * (t.value(a).array() > T(0)).template cast<T>();
    });
}

template <class T>
Var sigmoid(Tape<T>& t, Var a) {
    Matrix<T> y = (T(1) / (T(1) + (-t.value(a).array()).exp())).matrix();
    return t.record(std::move(y), t.requires_grad(a), [a](Tape<T>& t, Var self) {
        const auto& s = t.value(self).array();
        t.grad(a).array() += t.grad(self).array() * s * (T(1) - s);
    });
}

template <class T>
Var tanh(Tape<T>& t, Var a) {
    Matrix<T> y = t.value(a).array().tanh().matrix();
    return t.record(std::move(y), t.requires_grad(a), [a](Tape<T>& t, Var self) {
        const auto& s = t.value(self).array();
        t.grad(a).array() += t.grad(self).array() * (T(1) - s * s);
    });
}

template <class T>
Var exp_clamped(Tape<T>& t, Var a, T lo, T hi) {
    Matrix<T> y = t.value(a).array().exp().cwiseMax(lo).cwiseMin(hi).matrix();
    return t.record(std::move(y), t.requires_grad(a), [a, lo, hi](Tape<T>& t, Var self) {
        const auto e = t.value(a).array().exp();
        const auto inside = ((e > lo) && (e < hi)).template cast<T>();
        t.grad(a).array() += t.grad(self).array() * e * inside;
    });
}

template <class T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
    const auto& X = t.value(x);
    const int rows = static_cast<int>(X.rows());
    const auto cols = static_cast<std::ptrdiff_t>(X.cols());
    if (t.value(gamma).size() != rows || t.value(beta).size() != rows) throw ShapeError("layer_norm: parameter size");
    Matrix<T> y(X.rows(), X.cols());
    auto stats = std::make_shared<std::pair<std::vector<T>, std::vector<T>>>(
        std::vector<T>(static_cast<std::size_t>(cols)), std::vector<T>(static_cast<std::size_t>(cols)));
    kernels::layer_norm_forward(X.data(), rows, cols, t.value(gamma).data(), t.value(beta).data(), eps, y.data(),
                                stats->first.data(), stats->second.data());
    const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
    return t.record(std::move(y), rg, [x, gamma, beta, stats](Tape<T>& t, Var self) {
        const auto& X = t.value(x);
        T* dx = t.requires_grad(x) ? t.grad(x).data() : nullptr;
        T* dg = t.requires_grad(gamma) ? t.grad(gamma).data() : nullptr;
        T* db = t.requires_grad(beta) ? t.grad(beta).data() : nullptr;
        kernels::layer_norm_backward(X.data(), static_cast<int>(X.rows()), static_cast<std::ptrdiff_t>(X.cols()),
                                     t.value(gamma).data(), stats->first.data(), stats->second.data(),
                                     t.grad(self).data(), dx, dg, db);
    });
}

template <class T>
Var dropout(Tape<T>& t, Var x, T p, std::mt19937_64& rng) {
    if (p <= T(0)) return x;
    const auto& X = t.value(x);
    auto mask = std::make_shared<Matrix<T>>(X.rows(), X.cols());
    std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
    const T inv = T(1) / (T(1) - p);
    for (Eigen::Index i = 0; i < mask->size(); ++i) (*mask)(i) = keep(rng) ? inv : T(0);
    Matrix<T> y = X.cwiseProduct(*mask);
    return t.record(std::move(y), t.requires_grad(x), [x, mask](Tape<T>& t, Var self) {
        t.grad(x) += t.grad(self).cwiseProduct(*mask);
    });
}

template <class T>
Var conv2d(Tape<T>& t, Var x, Var weight, Var bias, const kernels::ConvGeometry& g) {
    const auto& X = t.value(x);
    const auto& W = t.value(weight);
    if (X.rows() != g.channels || X.cols() != static_cast<Eigen::Index>(g.batch) * g.height * g.width) {
        throw ShapeError("conv2d: input does not match geometry");
    }
    if (W.cols() != g.col_rows()) throw ShapeError("conv2d: weight does not match kernel size");
    auto cols = std::make_shared<Matrix<T>>(g.col_rows(), g.col_cols());
    kernels::im2col(X.data(), g, cols->data());
    Matrix<T> y(W.rows(), g.col_cols());
    y.noalias() = W * *cols;
    if (bias.valid()) y.colwise() += t.value(bias).col(0);
    const bool rg = t.requires_grad(x) || t.requires_grad(weight) || (bias.valid() && t.requires_grad(bias));
    return t.record(std::move(y), rg, [x, weight, bias, g, cols](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(weight)) t.grad(weight).noalias() += dy * cols->transpose();
        if (bias.valid() && t.requires_grad(bias)) t.grad(bias).col(0) += dy.rowwise().sum();
        if (t.requires_grad(x)) {
            Matrix<T> dcols = t.value(weight).transpose() * dy;
            kernels::col2im(dcols.data(), g, t.grad(x).data());
        }
    });
}

template <class T>
Var attention(Tape<T>& t, Var q, Var k, Var v, Var bias, const AttentionOptions& opt, Matrix<T>* weights_out) {
    const auto& Q = t.value(q);
    const auto& K = t.value(k);
    const auto& V = t.value(v);
    if (Q.rows() % opt.heads != 0) throw ShapeError("attention: width not divisible by heads");
    if (K.rows() != Q.rows() || V.rows() != Q.rows()) throw ShapeError("attention: q/k/v widths differ");
    if (Q.cols() != static_cast<Eigen::Index>(opt.batch) * opt.queries ||
        K.cols() != static_cast<Eigen::Index>(opt.batch) * opt.keys || V.cols() != K.cols()) {
        throw ShapeError("attention: token counts do not match batch layout");
    }
    if (opt.causal && opt.queries != opt.keys) throw ShapeError("attention: causal mask needs square scores");
    if (!opt.key_lengths.empty()) {
        if (static_cast<int>(opt.key_lengths.size()) != opt.batch) throw ShapeError("attention: key_lengths size");
        for (int len : opt.key_lengths) {
            if (len < 1 || len > opt.keys) throw ShapeError("attention: key length out of range");
        }
    }
    const Eigen::Index wcols = static_cast<Eigen::Index>(opt.batch) * opt.heads * opt.queries;
    if (bias.valid() && (t.value(bias).rows() != opt.keys || t.value(bias).cols() != wcols)) {
        throw ShapeError("attention: bias shape must be (keys, batch*heads*queries)");
    }
    auto state = std::make_shared<std::pair<Matrix<T>, AttentionOptions>>(Matrix<T>(opt.keys, wcols), opt);
    kernels::AttentionShape shape{opt.batch, opt.queries, opt.keys, opt.heads, static_cast<int>(Q.rows()) / opt.heads,
                                  opt.causal, state->second.key_lengths};
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(shape.head_dim));
    Matrix<T> out(Q.rows(), Q.cols());
    kernels::attention_forward(Q.data(), K.data(), V.data(), bias.valid() ? t.value(bias).data() : nullptr, shape,
                               scale_factor, out.data(), state->first.data());
    if (weights_out) *weights_out = state->first;
    const bool rg = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v) ||
                    (bias.valid() && t.requires_grad(bias));
    return t.record(std::move(out), rg, [q, k, v, bias, state, scale_factor](Tape<T>& t, Var self) {
        const auto& o = state->second;
        const auto& Q = t.value(q);
        kernels::AttentionShape shape{o.batch, o.queries, o.keys, o.heads, static_cast<int>(Q.rows()) / o.heads,
                                      o.causal, o.key_lengths};
        // Scratch buffers for inputs that do not need gradients.
        Matrix<T> sq, sk, sv;
        auto target = [&](Var in, Matrix<T>& scratch) -> T* {
            if (t.requires_grad(in)) return t.grad(in).data();
            scratch = Matrix<T>::Zero(t.value(in).rows(), t.value(in).cols());
            return scratch.data();
        };
        T* dq = target(q, sq);
        T* dk = target(k, sk);
        T* dv = target(v, sv);
        T* db = (bias.valid() && t.requires_grad(bias)) ? t.grad(bias).data() : nullptr;
        kernels::attention_backward(Q.data(), t.value(k).data(), t.value(v).data(), state->first.data(),
                                    t.grad(self).data(), shape, scale_factor, dq, dk, dv, db);
    });
}

namespace {

template <class F>
void for_each_map(const SecaMapShape& s, F&& visit) {
    for (int b = 0; b < s.batch; ++b) {
        for (int h = 0; h < s.heads; ++h) {
            for (int qi = 0; qi < s.queries; ++qi) {
                const Eigen::Index tok = static_cast<Eigen::Index>(b) * s.queries + qi;
                const Eigen::Index col = (static_cast<Eigen::Index>(b) * s.heads + h) * s.queries + qi;
                visit(h, tok, col);
            }
        }
    }
}

// Map center in grid units for head h of token tok.
template <class T>
std::pair<T, T> map_center(const SecaMapShape& s, const Matrix<T>& c, const Matrix<T>* off, int h, Eigen::Index tok) {
    T th = c(0, tok), tw = c(1, tok);
    if (off) {
        th += (*off)(2 * h, tok);
        tw += (*off)(2 * h + 1, tok);
    }
    return {th * s.height, tw * s.width};
}

}  // namespace

template <class T>
Var seca_log_maps(Tape<T>& t, Var centers, Var offsets, Var scales, const SecaMapShape& s) {
    const auto& Cm = t.value(centers);
    const auto& Sm = t.value(scales);
    const Eigen::Index n = static_cast<Eigen::Index>(s.batch) * s.queries;
    if (Cm.rows() != 2 || Cm.cols() != n) throw ShapeError("seca: centers must be (2, batch*queries)");
    const bool per_head_scale = Sm.rows() == 2 * s.heads;
    if (!(per_head_scale || Sm.rows() == 2) || Sm.cols() != n) throw ShapeError("seca: scales shape");
    if (offsets.valid() && (t.value(offsets).rows() != 2 * s.heads || t.value(offsets).cols() != n)) {
        throw ShapeError("seca: offsets must be (2*heads, batch*queries)");
    }
    const T lambda = static_cast<T>(s.lambda);
    const auto* off = offsets.valid() ? &t.value(offsets) : nullptr;
    Matrix<T> out(static_cast<Eigen::Index>(s.height) * s.width, n * s.heads);
    for_each_map(s, [&](int h, Eigen::Index tok, Eigen::Index col) {
        const auto [ch, cw] = map_center(s, Cm, off, h, tok);
        const int srow = per_head_scale ? 2 * h : 0;
        const T rh = Sm(srow, tok), rw = Sm(srow + 1, tok);
        const T ah = T(1) / (lambda * rh * rh), aw = T(1) / (lambda * rw * rw);
        for (int y = 0; y < s.height; ++y) {
            const T dy = (T(y) + T(0.5)) - ch;
            for (int x = 0; x < s.width; ++x) {
                const T dx = (T(x) + T(0.5)) - cw;
                out(y * s.width + x, col) = -dy * dy * ah - dx * dx * aw;
            }
        }
    });
    const bool rg = t.requires_grad(centers) || t.requires_grad(scales) || (offsets.valid() && t.requires_grad(offsets));
    return t.record(std::move(out), rg, [centers, offsets, scales, s, per_head_scale](Tape<T>& t, Var self) {
        const auto& G = t.grad(self);
        const auto& Cm = t.value(centers);
        const auto& Sm = t.value(scales);
        const auto* off = offsets.valid() ? &t.value(offsets) : nullptr;
        const T lambda = static_cast<T>(s.lambda);
        Matrix<T> dC = Matrix<T>::Zero(Cm.rows(), Cm.cols());
        Matrix<T> dS = Matrix<T>::Zero(Sm.rows(), Sm.cols());
        Matrix<T> dO = off ? Matrix<T>(Matrix<T>::Zero(off->rows(), off->cols())) : Matrix<T>();
        for_each_map(s, [&](int h, Eigen::Index tok, Eigen::Index col) {
            const auto [ch, cw] = map_center(s, Cm, off, h, tok);
            const int srow = per_head_scale ? 2 * h : 0;
            const T rh = Sm(srow, tok), rw = Sm(srow + 1, tok);
            const T ah = T(1) / (lambda * rh * rh), aw = T(1) / (lambda * rw * rw);
            T d_ch = 0, d_cw = 0, d_rh = 0, d_rw = 0;
            for (int y = 0; y < s.height; ++y) {
                const T dy = (T(y) + T(0.5)) - ch;
                for (int x = 0; x < s.width; ++x) {
                    const T dx = (T(x) + T(0.5)) - cw;
                    const T g = G(y * s.width + x, col);
                    d_ch += g * T(2) * dy * ah;
                    d_cw += g * T(2) * dx * aw;
                    d_rh += g * T(2) * dy * dy * ah / rh;
                    d_rw += g * T(2) * dx * dx * aw / rw;
                }
            }
            dC(0, tok) += d_ch * s.height;
            dC(1, tok) += d_cw * s.width;
            if (off) {
                dO(2 * h, tok) += d_ch * s.height;
                dO(2 * h + 1, tok) += d_cw * s.width;
            }
            dS(srow, tok) += d_rh;
            dS(srow + 1, tok) += d_rw;
        });
        if (t.requires_grad(centers)) t.grad(centers) += dC;
        if (t.requires_grad(scales)) t.grad(scales) += dS;
        if (off && t.requires_grad(offsets)) t.grad(offsets) += dO;
    });
}

template <class T>
Var gather_columns(Tape<T>& t, Var x, std::vector<int> index) {
    const auto& X = t.value(x);
    Matrix<T> y(X.rows(), static_cast<Eigen::Index>(index.size()));
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= X.cols()) throw ShapeError("gather_columns: index out of range");
        y.col(static_cast<Eigen::Index>(i)) = X.col(index[i]);
    }
    return t.record(std::move(y), t.requires_grad(x), [x, index = std::move(index)](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        auto& dx = t.grad(x);
        for (std::size_t i = 0; i < index.size(); ++i) dx.col(index[i]) += dy.col(static_cast<Eigen::Index>(i));
    });
}

template <class T>
Var mean_pool(Tape<T>& t, Var x, int block) {
    const auto& X = t.value(x);
    if (block <= 0 || X.cols() % block != 0) throw ShapeError("mean_pool: columns not divisible by block");
    const Eigen::Index groups = X.cols() / block;
    Matrix<T> y(X.rows(), groups);
    for (Eigen::Index g = 0; g < groups; ++g) y.col(g) = X.middleCols(g * block, block).rowwise().mean();
    return t.record(std::move(y), t.requires_grad(x), [x, block](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        auto& dx = t.grad(x);
        for (Eigen::Index g = 0; g < dy.cols(); ++g) {
            dx.middleCols(g * block, block).colwise() += dy.col(g) / T(block);
        }
    });
}

template <class T>
Var l2_normalize_columns(Tape<T>& t, Var x, T eps) {
    const auto& X = t.value(x);
    auto norms = std::make_shared<Eigen::Matrix<T, 1, Eigen::Dynamic>>(X.colwise().norm().array().max(eps).matrix());
    Matrix<T> y = X * norms->cwiseInverse().asDiagonal();
    return t.record(std::move(y), t.requires_grad(x), [x, norms](Tape<T>& t, Var self) {
        const auto& Y = t.value(self);
        const auto& dy = t.grad(self);
        // dx = (dy - y (y . dy)) / |x|
        const auto dots = Y.cwiseProduct(dy).colwise().sum().eval();
        Matrix<T> dx = dy - Y * dots.asDiagonal();
        t.grad(x) += dx * norms->cwiseInverse().asDiagonal();
    });
}

template <class T>
Var embedding(Tape<T>& t, Var table, std::vector<int> ids) {
    const auto& E = t.value(table);
    Matrix<T> y(E.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= E.cols()) throw ShapeError("embedding: id out of range");
        y.col(static_cast<Eigen::Index>(i)) = E.col(ids[i]);
    }
    return t.record(std::move(y), t.requires_grad(table), [table, ids = std::move(ids)](Tape<T>& t, Var self) {
        const auto& dy = t.grad(self);
        auto& dE = t.grad(table);
        for (std::size_t i = 0; i < ids.size(); ++i) dE.col(ids[i]) += dy.col(static_cast<Eigen::Index>(i));
    });
}

template <class T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::vector<int> targets) {
    const auto& L = t.value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != L.cols()) throw ShapeError("cross entropy: target count");
    auto probs = std::make_shared<Matrix<T>>(L.rows(), L.cols());
    T loss = 0;
    int valid = 0;
    for (Eigen::Index c = 0; c < L.cols(); ++c) {
        const T mx = L.col(c).maxCoeff();
        probs->col(c) = (L.col(c).array() - mx).exp().matrix();
        const T z = probs->col(c).sum();
        probs->col(c) /= z;
        const int target = targets[static_cast<std::size_t>(c)];
        if (target < 0) continue;
        if (target >= L.rows()) throw ShapeError("cross entropy: target class out of range");
        loss += -(L(target, c) - mx - std::log(z));
        ++valid;
    }
    const T denom = valid > 0 ? T(valid) : T(1);
    Matrix<T> y(1, 1);
    y(0, 0) = loss / denom;
    return t.record(std::move(y), t.requires_grad(logits),
                    [logits, probs, targets = std::move(targets), denom](Tape<T>& t, Var self) {
                        const T g = t.grad(self)(0, 0) / denom;
                        auto& dL = t.grad(logits);
                        for (Eigen::Index c = 0; c < dL.cols(); ++c) {
                            const int target = targets[static_cast<std::size_t>(c)];
                            if (target < 0) continue;
                            dL.col(c) += g * probs->col(c);
                            dL(target, c) -= g;
                        }
                    });
}

template <class T>
Var info_nce(Tape<T>& t, Var similarity, T tau, std::vector<int> groups) {
    const auto& F = t.value(similarity);
    const Eigen::Index K = F.rows();
    if (F.cols() != K) throw ShapeError("info_nce: similarity must be square");
    if (K < 2) throw BatchError("info_nce: batch needs at least 2 pairs");
    if (!(tau > T(0))) throw ConfigError("info_nce: temperature must be positive");
    if (!groups.empty() && static_cast<Eigen::Index>(groups.size()) != K) throw ShapeError("info_nce: group count");
    // keep(i, j): entry participates in both row-i and column-j softmaxes.
    Matrix<T> keep = Matrix<T>::Ones(K, K);
    if (!groups.empty()) {
        for (Eigen::Index i = 0; i < K; ++i) {
            for (Eigen::Index j = 0; j < K; ++j) {
                if (i != j && groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)]) keep(i, j) = 0;
            }
        }
    }
    const Matrix<T> logits = F / tau;
    auto row_p = std::make_shared<Matrix<T>>(K, K);
    auto col_p = std::make_shared<Matrix<T>>(K, K);
    T i2s = 0, s2i = 0;
    for (Eigen::Index i = 0; i < K; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < K; ++j) if (keep(i, j) > 0) mx = std::max(mx, logits(i, j));
        T z = 0;
        for (Eigen::Index j = 0; j < K; ++j) {
            (*row_p)(i, j) = keep(i, j) > 0 ? std::exp(logits(i, j) - mx) : T(0);
            z += (*row_p)(i, j);
        }
        row_p->row(i) /= z;
        i2s += -(logits(i, i) - mx - std::log(z));
    }
    for (Eigen::Index j = 0; j < K; ++j) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index i = 0; i < K; ++i) if (keep(i, j) > 0) mx = std::max(mx, logits(i, j));
        T z = 0;
        for (Eigen::Index i = 0; i < K; ++i) {
            (*col_p)(i, j) = keep(i, j) > 0 ? std::exp(logits(i, j) - mx) : T(0);
            z += (*col_p)(i, j);
        }
        col_p->col(j) /= z;
        s2i += -(logits(j, j) - mx - std::log(z));
    }
    Matrix<T> y(1, 1);
    y(0, 0) = T(0.5) * (i2s + s2i) / T(K);
    return t.record(std::move(y), t.requires_grad(similarity), [similarity, row_p, col_p, tau](Tape<T>& t, Var self) {
        const Eigen::Index K = row_p->rows();
        const T g = t.grad(self)(0, 0) * T(0.5) / (T(K) * tau);
        Matrix<T> d = *row_p + *col_p;
        d.diagonal().array() -= T(2);
        t.grad(similarity) += g * d;
    });
}

template <class T>
Var sum_scalars(Tape<T>& t, std::span<const Var> terms) {
    if (terms.empty()) throw ShapeError("sum_scalars: no terms");
    Matrix<T> y = Matrix<T>::Zero(1, 1);
    std::vector<Var> kept(terms.begin(), terms.end());
    bool rg = false;
    for (Var v : kept) {
        if (t.value(v).size() != 1) throw ShapeError("sum_scalars: term is not 1x1");
        y(0, 0) += t.value(v)(0, 0);
        rg = rg || t.requires_grad(v);
    }
    return t.record(std::move(y), rg, [kept](Tape<T>& t, Var self) {
        const T g = t.grad(self)(0, 0);
        for (Var v : kept) {
            if (t.requires_grad(v)) t.grad(v)(0, 0) += g;
        }
    });
}

#define SEQFAKE_INSTANTIATE_OPS(T)                                                                    \
    template Var linear<T>(Tape<T>&, Var, Var, Var);                                                  \
    template Var matmul<T>(Tape<T>&, Var, Var, bool, bool);                                           \
    template Var add<T>(Tape<T>&, Var, Var);                                                          \
    template Var add_constant<T>(Tape<T>&, Var, const Matrix<T>&);                                    \
    template Var scale<T>(Tape<T>&, Var, T);                                                          \
    template Var relu<T>(Tape<T>&, Var);                                                              \
    template Var sigmoid<T>(Tape<T>&, Var);                                                           \
    template Var tanh<T>(Tape<T>&, Var);                                                              \
    template Var exp_clamped<T>(Tape<T>&, Var, T, T);                                                 \
    template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                           \
    template Var dropout<T>(Tape<T>&, Var, T, std::mt19937_64&);                                      \
    template Var conv2d<T>(Tape<T>&, Var, Var, Var, const kernels::ConvGeometry&);                    \
    template Var attention<T>(Tape<T>&, Var, Var, Var, Var, const AttentionOptions&, Matrix<T>*);     \
    template Var seca_log_maps<T>(Tape<T>&, Var, Var, Var, const SecaMapShape&);                      \
    template Var gather_columns<T>(Tape<T>&, Var, std::vector<int>);                                  \
    template Var mean_pool<T>(Tape<T>&, Var, int);                                                    \
    template Var l2_normalize_columns<T>(Tape<T>&, Var, T);                                           \
    template Var embedding<T>(Tape<T>&, Var, std::vector<int>);                                       \
    template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::vector<int>);                           \
    template Var info_nce<T>(Tape<T>&, Var, T, std::vector<int>);                                     \
    template Var sum_scalars<T>(Tape<T>&, std::span<const Var>);

SEQFAKE_INSTANTIATE_OPS(float)
SEQFAKE_INSTANTIATE_OPS(double)

}  // namespace seqfake::nn
