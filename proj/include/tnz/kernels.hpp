#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an
// OpenMP variant producing bit-identical output for any thread count.

#include "tnz/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tnz {

struct GradientPair {
    double g = 0.0;
    double h = 0.0;
};

// Feature-major matrix of bin codes.
struct BinnedMatrix {
    std::size_t rows = 0;
    std::vector<std::uint32_t> bin_counts; // per feature
    std::vector<std::uint16_t> codes;      // codes[f * rows + r]

    std::size_t features() const noexcept { return bin_counts.size(); }
    std::span<const std::uint16_t> column(std::size_t f) const { return {codes.data() + f * rows, rows}; }
};

struct BinStats {
    double g = 0.0;
    double h = 0.0;
    std::uint32_t count = 0;
};

// Per-feature histograms laid out back to back; offsets[f] is the first bin
// of feature f. Features outside the requested subset stay zero.
class HistogramSet {
public:
    HistogramSet() = default;
    explicit HistogramSet(std::span<const std::uint32_t> bin_counts);

    std::span<BinStats> feature(std::size_t f) { return {bins_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]}; }
    std::span<const BinStats> feature(std::size_t f) const {
        return {bins_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
    }
    std::size_t features() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }

    void clear();
    // this = parent - other, bin-wise, over the given features.
    void subtract_from(const HistogramSet& parent, const HistogramSet& other, std::span<const std::uint32_t> features);

private:
    std::vector<std::size_t> offsets_;
    std::vector<BinStats> bins_;
};

void build_histograms_serial(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                             std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                             HistogramSet& out);

// Parallel over features; each feature is accumulated by one thread in row
// order, so results match the serial kernel exactly.
void build_histograms_omp(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                          std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                          HistogramSet& out, int threads);

double squared_distance(std::span<const double> a, std::span<const double> b);

// For each query row, the k nearest rows among `candidates` by Euclidean
// distance, excluding the query row itself. Ties go to the lower row index.
// Fewer than k neighbors are returned when there are not enough candidates.
std::vector<std::vector<std::uint32_t>> knn_serial(const DenseMatrix<double>& points,
                                                   std::span<const std::uint32_t> queries,
                                                   std::span<const std::uint32_t> candidates, std::size_t k);

std::vector<std::vector<std::uint32_t>> knn_omp(const DenseMatrix<double>& points,
                                                std::span<const std::uint32_t> queries,
                                                std::span<const std::uint32_t> candidates, std::size_t k, int threads);

} // namespace tnz
