// Serial reference vs OpenMP kernels, plus the skipgram step and SMOTE.

#include "tnz/balancing.hpp"
#include "tnz/embeddings.hpp"
#include "tnz/gbdt.hpp"
#include "tnz/kernels.hpp"
#include "tnz/random.hpp"

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

using namespace tnz;

namespace {

DenseMatrix<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    DenseMatrix<double> m(rows, cols);
    for (auto& v : m.values) v = rng.uniform(-1.0, 1.0);
    return m;
}

std::vector<std::uint32_t> iota_ids(std::size_t n) {
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    return ids;
}

struct HistogramFixture {
    BinnedMatrix data;
    std::vector<std::uint32_t> rows;
    std::vector<std::uint32_t> features;
    std::vector<GradientPair> grads;

    explicit HistogramFixture(std::size_t n) {
        const auto x = random_matrix(n, 100, 1);
        data = FeatureBinning::fit(x, 255).apply(x);
        rows = iota_ids(n);
        features = iota_ids(100);
        Rng rng(2);
        grads.resize(n);
        for (auto& g : grads) g = {rng.uniform(-1.0, 1.0), rng.uniform(0.0, 0.25)};
    }
};

void BM_HistogramSerial(benchmark::State& state) {
    HistogramFixture f(static_cast<std::size_t>(state.range(0)));
    HistogramSet hist(f.data.bin_counts);
    for (auto _ : state) {
        hist.clear();
        build_histograms_serial(f.data, f.rows, f.features, f.grads, hist);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}

void BM_HistogramOmp(benchmark::State& state) {
    HistogramFixture f(static_cast<std::size_t>(state.range(0)));
    HistogramSet hist(f.data.bin_counts);
    const int threads = static_cast<int>(state.range(1));
    for (auto _ : state) {
        hist.clear();
        build_histograms_omp(f.data, f.rows, f.features, f.grads, hist, threads);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}

void BM_KnnSerial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto points = random_matrix(n, 100, 3);
    const auto ids = iota_ids(n);
    for (auto _ : state) benchmark::DoNotOptimize(knn_serial(points, ids, ids, 5));
}

void BM_KnnOmp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto points = random_matrix(n, 100, 3);
    const auto ids = iota_ids(n);
    const int threads = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(knn_omp(points, ids, ids, 5, threads));
}

void BM_SkipgramStep(benchmark::State& state) {
    const auto dim = static_cast<std::size_t>(state.range(0));
    auto input = random_matrix(64, dim, 4);
    auto output = random_matrix(64, dim, 5);
    DenseMatrix<float> in_f(64, dim), out_f(64, dim);
    for (std::size_t i = 0; i < input.values.size(); ++i) {
        in_f.values[i] = static_cast<float>(input.values[i] * 0.1);
        out_f.values[i] = static_cast<float>(output.values[i] * 0.1);
    }
    const std::vector<std::uint32_t> rows{1, 9, 17, 33, 40};
    const std::vector<std::uint32_t> targets{2, 5, 8, 13, 21, 34};
    std::vector<float> hidden(dim), grad(dim);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            skipgram_step<float>(in_f, out_f, rows, targets, 0.001f, hidden, grad, InputUpdate::Shared));
    }
}

void BM_SmoteBalance(benchmark::State& state) {
    const auto x = random_matrix(1000, 100, 6);
    FeatureMatrix data(100);
    for (std::size_t i = 0; i < x.rows; ++i) {
        data.push_back(x.row(i), i < 700 ? Sentiment::Positive : (i < 900 ? Sentiment::Negative : Sentiment::Neutral));
    }
    BalanceConfig cfg;
    cfg.technique = BalanceTechnique::Smote;
    cfg.threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(balance(data, cfg));
}

} // namespace

BENCHMARK(BM_HistogramSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_HistogramOmp)->Args({1000, 1})->Args({10000, 1})->Args({10000, 4})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_KnnSerial)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnOmp)->Args({1000, 1})->Args({1000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SkipgramStep)->Arg(100);
BENCHMARK(BM_SmoteBalance)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
