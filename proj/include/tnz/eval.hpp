#pragma once

#include "tnz/balancing.hpp"
#include "tnz/corpus.hpp"
#include "tnz/gbdt.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tnz {

// Rows are true classes, columns predicted classes, both in [-1, 0, 1] order.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> cells{};

    std::size_t& at(Sentiment truth, Sentiment predicted) { return cells[class_index(truth)][class_index(predicted)]; }
    std::size_t at(Sentiment truth, Sentiment predicted) const {
        return cells[class_index(truth)][class_index(predicted)];
    }
    std::size_t total() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

// Throws Error on length mismatch or empty input.
ConfusionMatrix confusion(std::span<const Sentiment> y_true, std::span<const Sentiment> y_pred);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Metrics {
    std::array<ClassMetrics, kNumClasses> per_class{};
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

// Per-class precision/recall/F1 with 0/0 := 0; macro F1 is the unweighted
// mean over all three classes.
Metrics classification_metrics(const ConfusionMatrix& cm);

inline double macro_f1(std::span<const Sentiment> y_true, std::span<const Sentiment> y_pred) {
    return classification_metrics(confusion(y_true, y_pred)).macro_f1;
}

struct RunMetadata {
    std::string technique = "none";
    std::string embedding = "fasttext";
    GbdtConfig params;
    std::uint64_t seed = 0;
    std::string timestamp;
};

struct EvaluationReport {
    ConfusionMatrix confusion;
    Metrics metrics;
    RunMetadata meta;

    static std::string csv_header();
    std::string csv_row() const;
    // Confusion matrix plus per-class table, for humans.
    std::string summary() const;
};

EvaluationReport make_report(std::span<const Sentiment> y_true, std::span<const Sentiment> y_pred, RunMetadata meta);

// Throws ConfigError unless 0.5 < t <= 1.
void validate_threshold(double t);

// p >= t -> positive, p <= 1 - t -> negative, otherwise neutral.
Sentiment threshold_decide(double p_positive, double t);

// Candidate with the best macro F1 of threshold_decide; ties keep the
// smallest t.
double tune_threshold(std::span<const double> p_positive, std::span<const Sentiment> y_true,
                      std::span<const double> candidates);

struct SplitIndices {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> test;
};

// Stratified: each class contributes round(test_fraction * count) rows to
// the test side. Both sides are returned in ascending index order.
SplitIndices train_test_split(std::span<const Sentiment> labels, double test_fraction, std::uint64_t seed);

struct Fold {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> validation;
};

// Stratified k-fold over row indices 0..labels.size()-1.
std::vector<Fold> stratified_kfold(std::span<const Sentiment> labels, std::size_t k, std::uint64_t seed);

// Named GBDT parameters with candidate values (textual, as accepted by
// GbdtConfig::set). Combinations enumerate row-major: the last parameter
// varies fastest.
struct ParamGrid {
    std::vector<std::pair<std::string, std::vector<std::string>>> params;
    std::size_t folds = 5;

    std::size_t combinations() const;
    std::vector<std::pair<std::string, std::string>> combination(std::size_t index) const;
    void validate() const;
};

struct GridSearchSetup {
    GbdtConfig base;
    BalanceConfig balance;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct GridRow {
    std::size_t index = 0;
    std::vector<std::pair<std::string, std::string>> params;
    GbdtConfig config;
    std::vector<double> fold_f1;
    double mean_f1 = 0.0;
};

struct GridResult {
    std::vector<GridRow> rows;
    std::size_t best = 0;
    std::size_t fit_count = 0;
    // Balanced training sets audited against their validation fold.
    std::size_t leakage_checks = 0;

    const GridRow& best_row() const { return rows[best]; }
};

// Throws LeakageError if any balanced training row derives from a
// validation row of its fold.
void assert_no_leakage(const FeatureMatrix& balanced_train, std::span<const std::uint32_t> train_ids,
                       std::span<const std::uint32_t> validation_ids);

// Cross-validated search. Every (combination, fold) fit is a pure function
// of its inputs and a seed derived from setup.seed, so results do not depend
// on setup.threads. `data.origin` must identify rows uniquely.
GridResult grid_search(const FeatureMatrix& data, const ParamGrid& grid, const GridSearchSetup& setup);

std::string grid_results_csv(const GridResult& result, const ParamGrid& grid, std::string_view technique,
                             std::string_view embedding);

} // namespace tnz
