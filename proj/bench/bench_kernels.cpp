// Parallel kernels against the serial reference loops.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "seqfake/kernels/kernels.hpp"

using namespace seqfake::kernels;
using Mat = Eigen::MatrixXf;

namespace {

Mat random(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> d(0.0f, 1.0f);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
    return m;
}

// Stride-2 3x3 stage of the backbone: (Cin, B*S*S) -> (Cout, B*S/2*S/2).
ConvGeometry conv_geometry(const benchmark::State& state) {
    ConvGeometry g;
    g.channels = static_cast<int>(state.range(0));
    g.batch = 8;
    g.height = g.width = static_cast<int>(state.range(1));
    g.kernel = 3;
    g.stride = 2;
    g.pad = 1;
    return g;
}

void BM_ConvIm2colGemm(benchmark::State& state) {
    const auto g = conv_geometry(state);
    const int cout = 2 * g.channels;
    const Mat in = random(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width, 1);
    const Mat w = random(cout, g.col_rows(), 2);
    Mat cols(g.col_rows(), g.col_cols()), out(cout, g.col_cols());
    omp_set_num_threads(static_cast<int>(state.range(2)));
    for (auto _ : state) {
        im2col(in.data(), g, cols.data());
        out.noalias() = w * cols;
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * g.col_cols());
}

void BM_ConvReference(benchmark::State& state) {
    const auto g = conv_geometry(state);
    const int cout = 2 * g.channels;
    const Mat in = random(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width, 1);
    const Mat w = random(cout, g.col_rows(), 2);
    Mat out(cout, g.col_cols());
    for (auto _ : state) {
        reference::conv2d_forward(in.data(), w.data(), static_cast<const float*>(nullptr), cout, g, out.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * g.col_cols());
}

// Cross-attention of 6 decoder tokens over an 8x8 grid, width 128, 4 heads.
AttentionShape attention_shape(const benchmark::State& state) {
    AttentionShape s;
    s.batch = static_cast<int>(state.range(0));
    s.queries = 6;
    s.keys = 64;
    s.heads = 4;
    s.head_dim = 32;
    return s;
}

void BM_AttentionParallel(benchmark::State& state) {
    const auto s = attention_shape(state);
    const int C = s.heads * s.head_dim;
    const Mat q = random(C, s.batch * s.queries, 3), k = random(C, s.batch * s.keys, 4), v = random(C, s.batch * s.keys, 5);
    Mat out(C, s.batch * s.queries), w(s.keys, s.batch * s.heads * s.queries);
    omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state) {
        attention_forward(q.data(), k.data(), v.data(), static_cast<const float*>(nullptr), s, 0.17f, out.data(), w.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * s.batch);
}

void BM_AttentionReference(benchmark::State& state) {
    const auto s = attention_shape(state);
    const int C = s.heads * s.head_dim;
    const Mat q = random(C, s.batch * s.queries, 3), k = random(C, s.batch * s.keys, 4), v = random(C, s.batch * s.keys, 5);
    Mat out(C, s.batch * s.queries), w(s.keys, s.batch * s.heads * s.queries);
    for (auto _ : state) {
        reference::attention_forward(q.data(), k.data(), v.data(), static_cast<const float*>(nullptr), s, 0.17f, out.data(),
                                     w.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * s.batch);
}

}  // namespace

BENCHMARK(BM_ConvIm2colGemm)->ArgsProduct({{16, 64}, {32, 64}, {1, 4}})->UseRealTime();
BENCHMARK(BM_ConvReference)->ArgsProduct({{16, 64}, {32, 64}});
BENCHMARK(BM_AttentionParallel)->ArgsProduct({{8, 32}, {1, 4}})->UseRealTime();
BENCHMARK(BM_AttentionReference)->Args({8})->Args({32});

BENCHMARK_MAIN();
