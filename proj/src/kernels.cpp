#include "tnz/kernels.hpp"

#include <algorithm>
#include <utility>

namespace tnz {

HistogramSet::HistogramSet(std::span<const std::uint32_t> bin_counts) {
    offsets_.reserve(bin_counts.size() + 1);
    std::size_t total = 0;
    offsets_.push_back(0);
    for (auto c : bin_counts) {
        total += c;
        offsets_.push_back(total);
    }
    bins_.assign(total, BinStats{});
}

void HistogramSet::clear() { std::fill(bins_.begin(), bins_.end(), BinStats{}); }

void HistogramSet::subtract_from(const HistogramSet& parent, const HistogramSet& other,
                                 std::span<const std::uint32_t> features) {
    for (auto f : features) {
        auto dst = feature(f);
        const auto p = parent.feature(f);
        const auto o = other.feature(f);
        for (std::size_t b = 0; b < dst.size(); ++b) {
            dst[b].g = p[b].g - o[b].g;
            dst[b].h = p[b].h - o[b].h;
            dst[b].count = p[b].count - o[b].count;
        }
    }
}

namespace {

void accumulate_feature(const BinnedMatrix& data, std::span<const std::uint32_t> rows, std::uint32_t f,
                        std::span<const GradientPair> gradients, HistogramSet& out) {
    auto hist = out.feature(f);
    std::fill(hist.begin(), hist.end(), BinStats{});
    const auto column = data.column(f);
    for (auto r : rows) {
        auto& bin = hist[column[r]];
        bin.g += gradients[r].g;
        bin.h += gradients[r].h;
        ++bin.count;
    }
}

std::vector<std::uint32_t> nearest(const DenseMatrix<double>& points, std::uint32_t query,
                                   std::span<const std::uint32_t> candidates, std::size_t k) {
    std::vector<std::pair<double, std::uint32_t>> scored;
    scored.reserve(candidates.size());
    const auto q = points.row(query);
    for (auto c : candidates) {
        if (c != query) {
            scored.emplace_back(squared_distance(q, points.row(c)), c);
        }
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());
    std::vector<std::uint32_t> out(take);
    for (std::size_t i = 0; i < take; ++i) {
        out[i] = scored[i].second;
    }
    return out;
}

} // namespace

void build_histograms_serial(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                             std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                             HistogramSet& out) {
    for (auto f : features) {
        accumulate_feature(data, rows, f, gradients, out);
    }
}

void build_histograms_omp(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                          std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                          HistogramSet& out, int threads) {
    const auto n = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        accumulate_feature(data, rows, features[static_cast<std::size_t>(i)], gradients, out);
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        sum += diff * diff;
    }
    return sum;
}

std::vector<std::vector<std::uint32_t>> knn_serial(const DenseMatrix<double>& points,
                                                   std::span<const std::uint32_t> queries,
                                                   std::span<const std::uint32_t> candidates, std::size_t k) {
    std::vector<std::vector<std::uint32_t>> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        out[i] = nearest(points, queries[i], candidates, k);
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> knn_omp(const DenseMatrix<double>& points,
                                                std::span<const std::uint32_t> queries,
                                                std::span<const std::uint32_t> candidates, std::size_t k, int threads) {
    std::vector<std::vector<std::uint32_t>> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for num_threads(threads) schedule(dynamic, 16) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        out[idx] = nearest(points, queries[idx], candidates, k);
    }
    return out;
}

} // namespace tnz
