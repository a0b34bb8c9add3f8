#include <gtest/gtest.h>
#include <omp.h>

#include "seqfake/kernels/kernels.hpp"
#include "support.hpp"

using namespace seqfake;
using namespace seqfake::testing;

namespace {

struct ThreadScope {
    int saved;
    explicit ThreadScope(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadScope() { omp_set_num_threads(saved); }
};

kernels::ConvGeometry geometry() {
    kernels::ConvGeometry g;
    g.channels = 5;
    g.batch = 3;
    g.height = 12;
    g.width = 10;
    g.kernel = 3;
    g.stride = 2;
    g.pad = 1;
    return g;
}

}  // namespace

TEST(Kernels, Im2colConvMatchesDirectConvolution) {
    const auto g = geometry();
    const auto x = random_matrix<float>(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width, 1);
    const auto w = random_matrix<float>(7, g.col_rows(), 2);
    const auto b = random_matrix<float>(7, 1, 3);
    Matrix<float> cols(g.col_rows(), g.col_cols());
    kernels::im2col(x.data(), g, cols.data());
    Matrix<float> fast = w * cols;
    fast.colwise() += b.col(0);
    Matrix<float> ref(7, g.col_cols());
    kernels::reference::conv2d_forward(x.data(), w.data(), b.data(), 7, g, ref.data());
    EXPECT_LE((fast - ref).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(Kernels, Col2imIsTheAdjointOfIm2col) {
    const auto g = geometry();
    const auto x = random_matrix<double>(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width, 4);
    const auto y = random_matrix<double>(g.col_rows(), g.col_cols(), 5);
    Matrix<double> cols(g.col_rows(), g.col_cols());
    kernels::im2col(x.data(), g, cols.data());
    Matrix<double> back = Matrix<double>::Zero(x.rows(), x.cols());
    kernels::col2im(y.data(), g, back.data());
    // <im2col(x), y> == <x, col2im(y)>
    EXPECT_NEAR(cols.cwiseProduct(y).sum(), x.cwiseProduct(back).sum(), 1e-9);
}

TEST(Kernels, AttentionMatchesNaiveLoops) {
    kernels::AttentionShape s;
    s.batch = 3;
    s.queries = 4;
    s.keys = 6;
    s.heads = 2;
    s.head_dim = 4;
    std::vector<int> lengths{6, 2, 5};
    s.key_lengths = lengths;
    const int C = s.heads * s.head_dim;
    const auto q = random_matrix<double>(C, s.batch * s.queries, 6);
    const auto k = random_matrix<double>(C, s.batch * s.keys, 7);
    const auto v = random_matrix<double>(C, s.batch * s.keys, 8);
    const auto bias = random_matrix<double>(s.keys, s.batch * s.heads * s.queries, 9);
    Matrix<double> out(C, q.cols()), w(s.keys, bias.cols()), ref_out(C, q.cols()), ref_w(s.keys, bias.cols());
    kernels::attention_forward(q.data(), k.data(), v.data(), bias.data(), s, 0.5, out.data(), w.data());
    kernels::reference::attention_forward(q.data(), k.data(), v.data(), bias.data(), s, 0.5, ref_out.data(), ref_w.data());
    EXPECT_LE((out - ref_out).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((w - ref_w).cwiseAbs().maxCoeff(), 1e-12);

    s.causal = true;
    s.keys = s.queries;
    s.key_lengths = {};
    const auto k2 = random_matrix<double>(C, s.batch * s.keys, 10);
    Matrix<double> o2(C, q.cols()), w2(s.keys, s.batch * s.heads * s.queries), r2(C, q.cols()), rw2(w2.rows(), w2.cols());
    kernels::attention_forward(q.data(), k2.data(), k2.data(), static_cast<const double*>(nullptr), s, 0.5, o2.data(), w2.data());
    kernels::reference::attention_forward(q.data(), k2.data(), k2.data(), static_cast<const double*>(nullptr), s, 0.5,
                                          r2.data(), rw2.data());
    EXPECT_LE((o2 - r2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((w2 - rw2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kernels, ResultsDoNotDependOnThreadCount) {
    const auto g = geometry();
    const auto x = random_matrix<float>(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width, 11);
    const auto y = random_matrix<float>(g.col_rows(), g.col_cols(), 12);
    kernels::AttentionShape s;
    s.batch = 4;
    s.queries = 5;
    s.keys = 7;
    s.heads = 4;
    s.head_dim = 3;
    const auto q = random_matrix<float>(12, 20, 13), k = random_matrix<float>(12, 28, 14), v = random_matrix<float>(12, 28, 15);
    const auto dout = random_matrix<float>(12, 20, 16);
    const auto ln_x = random_matrix<float>(9, 33, 17), gamma = random_matrix<float>(9, 1, 18), beta = random_matrix<float>(9, 1, 19);

    auto run = [&](int threads) {
        ThreadScope scope(threads);
        std::vector<Matrix<float>> r;
        Matrix<float> cols(g.col_rows(), g.col_cols());
        kernels::im2col(x.data(), g, cols.data());
        r.push_back(cols);
        Matrix<float> back = Matrix<float>::Zero(x.rows(), x.cols());
        kernels::col2im(y.data(), g, back.data());
        r.push_back(back);
        Matrix<float> out(12, 20), w(7, 80);
        kernels::attention_forward(q.data(), k.data(), v.data(), static_cast<const float*>(nullptr), s, 0.3f, out.data(), w.data());
        Matrix<float> dq = Matrix<float>::Zero(12, 20), dk = Matrix<float>::Zero(12, 28), dv = Matrix<float>::Zero(12, 28);
        kernels::attention_backward(q.data(), k.data(), v.data(), w.data(), dout.data(), s, 0.3f, dq.data(), dk.data(),
                                    dv.data(), static_cast<float*>(nullptr));
        r.insert(r.end(), {out, w, dq, dk, dv});
        Matrix<float> ly(9, 33), mean(33, 1), rstd(33, 1), dx = Matrix<float>::Zero(9, 33), dg = Matrix<float>::Zero(9, 1),
                                                          db = Matrix<float>::Zero(9, 1);
        kernels::layer_norm_forward(ln_x.data(), 9, 33, gamma.data(), beta.data(), 1e-5f, ly.data(), mean.data(), rstd.data());
        kernels::layer_norm_backward(ln_x.data(), 9, 33, gamma.data(), mean.data(), rstd.data(), ly.data(), dx.data(),
                                     dg.data(), db.data());
        r.insert(r.end(), {ly, dx, dg, db});
        return r;
    };
    const auto serial = run(1);
    const auto parallel = run(4);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_TRUE(serial[i] == parallel[i]) << "output " << i << " differs between 1 and 4 threads";
    }
}

TEST(Kernels, LayerNormColumnsHaveZeroMeanUnitVariance) {
    const auto x = random_matrix<double>(16, 5, 20, 3.0);
    Matrix<double> gamma = Matrix<double>::Ones(16, 1), beta = Matrix<double>::Zero(16, 1), y(16, 5), mean(5, 1), rstd(5, 1);
    kernels::layer_norm_forward(x.data(), 16, 5, gamma.data(), beta.data(), 0.0, y.data(), mean.data(), rstd.data());
    for (int c = 0; c < 5; ++c) {
        EXPECT_NEAR(y.col(c).mean(), 0.0, 1e-12);
        EXPECT_NEAR(y.col(c).squaredNorm() / 16, 1.0, 1e-9);
    }
}
