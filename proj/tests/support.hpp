#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "seqfake/nn/layers.hpp"

namespace seqfake::testing {

using nn::Matrix;
using nn::Tape;
using nn::Var;

template <class T>
Matrix<T> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    Matrix<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<T>(d(rng));
    return m;
}

// sum(W .* y) as a 1x1 node, so any tensor output can be checked.
template <class T>
Var project(Tape<T>& t, Var y, const Matrix<T>& w) {
    Matrix<T> out(1, 1);
    out(0, 0) = t.value(y).cwiseProduct(w).sum();
    return t.record(std::move(out), t.requires_grad(y), [y, w](Tape<T>& t, Var self) {
        t.grad(y) += t.grad(self)(0, 0) * w;
    });
}

struct GradReport {
    double worst = 0.0;
    std::string where;
    int checked = 0;
};

// Central differences on up to `samples` entries of every tensor in `params`.
// `loss` rebuilds the scalar objective on a fresh tape.
inline GradReport check_gradients(const std::vector<nn::ParamPtr<double>>& params,
                                  const std::function<Var(Tape<double>&)>& loss, int samples = 12,
                                  double h = 1e-6, std::uint64_t seed = 5) {
    for (const auto& p : params) p->zero_grad();
    {
        Tape<double> t;
        Var l = loss(t);
        t.backward(l);
    }
    std::vector<Matrix<double>> analytic;
    for (const auto& p : params) analytic.push_back(p->grad);
    std::mt19937_64 rng(seed);
    GradReport r;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(samples)));
        for (Eigen::Index i : idx) {
            const double saved = p.value(i);
            p.value(i) = saved + h;
            double up, down;
            {
                Tape<double> t(false);
                up = t.value(loss(t))(0, 0);
            }
            p.value(i) = saved - h;
            {
                Tape<double> t(false);
                down = t.value(loss(t))(0, 0);
            }
            p.value(i) = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[k](i);
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++r.checked;
            if (err > r.worst) {
                r.worst = err;
                r.where = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                          std::to_string(numeric);
            }
        }
    }
    for (const auto& p : params) p->zero_grad();
    return r;
}

inline nn::ParamPtr<double> make_param(const std::string& name, Matrix<double> v) {
    return std::make_shared<nn::Parameter<double>>(name, std::move(v), nn::ParamGroup::transformer);
}

}  // namespace seqfake::testing
