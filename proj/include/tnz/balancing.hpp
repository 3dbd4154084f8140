#pragma once

#include "tnz/corpus.hpp"
#include "tnz/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace tnz {

enum class Provenance : std::uint8_t { Original, Synthetic, Duplicated };

// Sentence vectors with aligned labels. `origin` carries a caller-defined
// source id per row (e.g. the row's index in the full dataset); balancing
// copies it from the seed row, and `partner` holds the interpolation
// partner's id for synthetic rows (equal to origin otherwise).
struct FeatureMatrix {
    DenseMatrix<double> rows;
    std::vector<Sentiment> labels;
    std::vector<Provenance> provenance;
    std::vector<std::uint32_t> origin;
    std::vector<std::uint32_t> partner;

    FeatureMatrix() = default;
    explicit FeatureMatrix(std::size_t dim) : rows(0, dim) {}

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return rows.cols; }
    std::span<const double> row(std::size_t i) const { return rows.row(i); }

    // Appends an original row whose origin is its own index.
    void push_back(std::span<const double> values, Sentiment label);
    void append(std::span<const double> values, Sentiment label, Provenance prov, std::uint32_t origin_id,
                std::uint32_t partner_id);

    // Rows and labels aligned, all entries finite. Throws Error.
    void validate() const;

    // Keeps the selected rows in the given order, preserving their metadata.
    FeatureMatrix subset(std::span<const std::uint32_t> indices) const;

    bool operator==(const FeatureMatrix&) const = default;
};

enum class BalanceTechnique : std::uint8_t { None, Under, Over, Smote, Adasyn };

std::string_view balance_technique_name(BalanceTechnique t);
std::optional<BalanceTechnique> parse_balance_technique(std::string_view name);

struct BalanceConfig {
    BalanceTechnique technique = BalanceTechnique::None;
    std::size_t k_neighbors = 5;
    double beta = 1.0;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const;
};

FeatureMatrix random_undersample(const FeatureMatrix& data, std::uint64_t seed);
FeatureMatrix random_oversample(const FeatureMatrix& data, std::uint64_t seed);
FeatureMatrix smote(const FeatureMatrix& data, const BalanceConfig& config);
FeatureMatrix adasyn(const FeatureMatrix& data, const BalanceConfig& config);

// Dispatches on config.technique; None returns the input unchanged.
FeatureMatrix balance(const FeatureMatrix& data, const BalanceConfig& config);

// x + lambda * (partner - x).
std::vector<double> interpolate(std::span<const double> x, std::span<const double> partner, double lambda);

// Per-row synthetic counts for ADASYN: allocation proportional to
// `impurity`, summing exactly to `total`. Uniform when all impurities are 0.
std::vector<std::size_t> adasyn_allocation(std::span<const double> impurity, std::size_t total);

} // namespace tnz
