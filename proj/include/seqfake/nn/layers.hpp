#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "seqfake/error.hpp"
#include "seqfake/nn/ops.hpp"

namespace seqfake::nn {

// Named parameters of a model. A parameter may be bound under several names
// (shared layers); `params()` lists each distinct tensor once, under the name
// it was created with.
template <class T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

    ParamPtr<T> create(const std::string& name, Matrix<T> value, ParamGroup group, bool decay = true) {
        if (by_name_.count(name)) throw BindingError("duplicate parameter name: " + name);
        auto p = std::make_shared<Parameter<T>>(name, std::move(value), group, decay);
        by_name_[name] = p;
        order_.push_back(p);
        return p;
    }

    // Xavier-uniform (rows=out, cols=in).
    ParamPtr<T> xavier(const std::string& name, int out, int in, ParamGroup group) {
        const double a = std::sqrt(6.0 / (in + out));
        return create(name, uniform(out, in, a), group);
    }

    // He-normal with fan_in = cols.
    ParamPtr<T> he(const std::string& name, int out, int in, ParamGroup group) {
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / in));
        Matrix<T> m(out, in);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<T>(d(rng_));
        return create(name, std::move(m), group);
    }

    ParamPtr<T> zeros(const std::string& name, int rows, int cols, ParamGroup group, bool decay = false) {
        return create(name, Matrix<T>::Zero(rows, cols), group, decay);
    }

    ParamPtr<T> ones(const std::string& name, int rows, int cols, ParamGroup group, bool decay = false) {
        return create(name, Matrix<T>::Ones(rows, cols), group, decay);
    }

    ParamPtr<T> normal(const std::string& name, int rows, int cols, double stddev, ParamGroup group) {
        std::normal_distribution<double> d(0.0, stddev);
        Matrix<T> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<T>(d(rng_));
        return create(name, std::move(m), group);
    }

    // Binds an existing parameter under an additional name.
    void alias(const std::string& name, const ParamPtr<T>& existing) {
        if (by_name_.count(name)) throw BindingError("duplicate parameter name: " + name);
        by_name_[name] = existing;
        aliases_[existing->name].push_back(name);
    }

    const std::vector<ParamPtr<T>>& params() const { return order_; }
    const std::map<std::string, std::vector<std::string>>& aliases() const { return aliases_; }

    ParamPtr<T> find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }

    void zero_grad() {
        for (auto& p : order_) p->zero_grad();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : order_) n += static_cast<std::size_t>(p->value.size());
        return n;
    }

private:
    Matrix<T> uniform(int rows, int cols, double a) {
        std::uniform_real_distribution<double> d(-a, a);
        Matrix<T> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<T>(d(rng_));
        return m;
    }

    std::mt19937_64 rng_;
    std::map<std::string, ParamPtr<T>> by_name_;
    std::vector<ParamPtr<T>> order_;
    std::map<std::string, std::vector<std::string>> aliases_;
};

// Per-forward state: tape, dropout rate and generator.
template <class T>
struct Context {
    Tape<T>& tape;
    bool training = false;
    T dropout = T(0);
    std::mt19937_64* rng = nullptr;

    Var p(const ParamPtr<T>& param) { return tape.param(param); }
    Var drop(Var x) { return (training && dropout > T(0) && rng) ? nn::dropout(tape, x, dropout, *rng) : x; }
};

template <class T>
struct Linear {
    ParamPtr<T> weight, bias;

    Linear() = default;
    Linear(ParamStore<T>& s, const std::string& name, int in, int out, ParamGroup g = ParamGroup::transformer)
        : weight(s.xavier(name + ".weight", out, in, g)), bias(s.zeros(name + ".bias", out, 1, g)) {}

    Var operator()(Context<T>& c, Var x) const { return linear(c.tape, x, c.p(weight), c.p(bias)); }
    int in() const { return static_cast<int>(weight->value.cols()); }
    int out() const { return static_cast<int>(weight->value.rows()); }
};

template <class T>
struct LayerNorm {
    ParamPtr<T> gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamStore<T>& s, const std::string& name, int width)
        : gamma(s.ones(name + ".gamma", width, 1, ParamGroup::transformer)),
          beta(s.zeros(name + ".beta", width, 1, ParamGroup::transformer)) {}

    Var operator()(Context<T>& c, Var x) const { return layer_norm(c.tape, x, c.p(gamma), c.p(beta)); }
};

// Pre-LN feed-forward block: x + W2 relu(W1 LN(x)).
template <class T>
struct FeedForward {
    LayerNorm<T> norm;
    Linear<T> fc1, fc2;

    FeedForward() = default;
    FeedForward(ParamStore<T>& s, const std::string& name, int width, int hidden)
        : norm(s, name + ".norm", width), fc1(s, name + ".fc1", width, hidden), fc2(s, name + ".fc2", hidden, width) {}

    Var operator()(Context<T>& c, Var x) const {
        Var h = relu(c.tape, fc1(c, norm(c, x)));
        return add(c.tape, x, c.drop(fc2(c, c.drop(h))));
    }
};

// Multi-head attention projections (queries from x, keys/values from memory).
template <class T>
struct MultiHeadAttention {
    Linear<T> wq, wk, wv, wo;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<T>& s, const std::string& name, int width, int h)
        : wq(s, name + ".wq", width, width), wk(s, name + ".wk", width, width), wv(s, name + ".wv", width, width),
          wo(s, name + ".wo", width, width), heads(h) {
        if (width % h != 0) throw ConfigError("model width must be divisible by the head count");
    }

    Var operator()(Context<T>& c, Var x, Var memory, Var bias, AttentionOptions opt,
                   Matrix<T>* weights_out = nullptr) const {
        opt.heads = heads;
        Var out = attention(c.tape, wq(c, x), wk(c, memory), wv(c, memory), bias, opt, weights_out);
        return wo(c, out);
    }
};

// Pre-LN self-attention block: x + MHA(LN(x)).
template <class T>
struct SelfAttentionBlock {
    LayerNorm<T> norm;
    MultiHeadAttention<T> attn;

    SelfAttentionBlock() = default;
    SelfAttentionBlock(ParamStore<T>& s, const std::string& name, int width, int heads)
        : norm(s, name + ".norm", width), attn(s, name + ".attn", width, heads) {}

    Var operator()(Context<T>& c, Var x, const AttentionOptions& opt, Matrix<T>* weights_out = nullptr) const {
        Var h = norm(c, x);
        return add(c.tape, x, c.drop(attn(c, h, h, Var{}, opt, weights_out)));
    }
};

// Sinusoidal codes. Row 2i holds sin(pos / 10000^(2i/C)), row 2i+1 the cosine.
template <class T>
Matrix<T> sinusoid_1d(int width, int positions) {
    Matrix<T> m(width, positions);
    for (int p = 0; p < positions; ++p) {
        for (int i = 0; i < width / 2; ++i) {
            const double f = std::pow(10000.0, -2.0 * i / width);
            m(2 * i, p) = static_cast<T>(std::sin(p * f));
            m(2 * i + 1, p) = static_cast<T>(std::cos(p * f));
        }
        if (width % 2) m(width - 1, p) = T(0);
    }
    return m;
}

// 2-D code for an H x W grid, column y*W + x: first C/2 rows encode y, the rest x.
template <class T>
Matrix<T> sinusoid_2d(int width, int height, int grid_width) {
    if (width % 4 != 0) throw ConfigError("2-D positional encoding needs width divisible by 4");
    const int half = width / 2;
    const Matrix<T> rows = sinusoid_1d<T>(half, height);
    const Matrix<T> cols = sinusoid_1d<T>(half, grid_width);
    Matrix<T> m(width, height * grid_width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < grid_width; ++x) {
            m.col(y * grid_width + x) << rows.col(y), cols.col(x);
        }
    }
    return m;
}

// Tiles a (C, N) matrix `times` along the columns.
template <class T>
Matrix<T> tile_columns(const Matrix<T>& m, int times) {
    Matrix<T> out(m.rows(), m.cols() * times);
    for (int i = 0; i < times; ++i) out.middleCols(i * m.cols(), m.cols()) = m;
    return out;
}

}  // namespace seqfake::nn
