#pragma once

#include "tnz/balancing.hpp"
#include "tnz/corpus.hpp"
#include "tnz/kernels.hpp"
#include "tnz/matrix.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tnz {

struct GbdtConfig {
    std::uint32_t num_leaves = 64;
    int max_depth = 8; // <= 0: unlimited
    double learning_rate = 0.1;
    std::uint32_t n_estimators = 1000;
    double min_child_weight = 10.0; // minimum hessian sum per child
    double reg_alpha = 0.1;         // L1
    double reg_lambda = 1.0;        // L2
    double subsample = 0.6;
    double colsample_bytree = 1.0;
    std::uint32_t max_bins = 255;
    std::uint64_t seed = 1;

    void validate() const;

    // `key=value` pairs separated by single spaces, fixed key order.
    std::string to_line() const;
    static GbdtConfig from_line(std::string_view line);

    // Sets one field by name from its textual value. Throws ConfigError.
    void set(std::string_view key, std::string_view value);

    bool operator==(const GbdtConfig&) const = default;
};

// Names accepted by GbdtConfig::set, in to_line order.
const std::vector<std::string>& gbdt_parameter_names();

// Quantile bins per feature. Bin b holds values in (bounds[b-1], bounds[b]];
// values above the last bound clamp to the last bin and NaN maps to bin 0.
class FeatureBinning {
public:
    FeatureBinning() = default;
    explicit FeatureBinning(std::vector<std::vector<double>> bounds);

    static FeatureBinning fit(const DenseMatrix<double>& rows, std::uint32_t max_bins);

    std::size_t features() const noexcept { return bounds_.size(); }
    const std::vector<double>& bounds(std::size_t f) const { return bounds_[f]; }
    std::uint16_t bin(std::size_t f, double value) const;
    BinnedMatrix apply(const DenseMatrix<double>& rows) const;

    bool operator==(const FeatureBinning&) const = default;

private:
    std::vector<std::vector<double>> bounds_;
};

// Soft-thresholding T(G) = sign(G) max(|G| - alpha, 0).
double soft_threshold(double g, double alpha);
// T(G)^2 / (2 (H + lambda)).
double leaf_objective(double g, double h, const GbdtConfig& config);
// -T(G) / (H + lambda).
double leaf_weight(double g, double h, const GbdtConfig& config);

// Relative tolerance under which two split gains count as tied.
inline constexpr double kGainTieTolerance = 1e-10;

// True when `gain` beats `best` by more than the tie tolerance.
bool gain_improves(double gain, double best);
// Smallest gain accepted for a split of a leaf with totals (g, h).
double minimum_split_gain(double g, double h, const GbdtConfig& config);

struct SplitCandidate {
    std::uint32_t feature = 0;
    std::uint32_t bin = 0; // rows with code <= bin go left
    double gain = 0.0;
    double left_g = 0.0;
    double left_h = 0.0;
    std::uint32_t left_count = 0;
    double right_g = 0.0;
    double right_h = 0.0;
    std::uint32_t right_count = 0;
};

// Best (feature, bin boundary) over `features` (scanned in ascending order).
// Ties keep the lower feature, then the lower bin. Returns nullopt when no
// candidate clears minimum_split_gain.
std::optional<SplitCandidate> best_split(const HistogramSet& histograms, std::span<const std::uint32_t> features,
                                         double total_g, double total_h, std::uint32_t total_count,
                                         const GbdtConfig& config);

struct TreeNode {
    std::int32_t feature = -1; // -1 marks a leaf
    std::uint32_t bin = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

class Tree {
public:
    Tree() : nodes_(1) {}
    explicit Tree(std::vector<TreeNode> nodes);

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const;
    std::size_t depth() const;

    // Leaf value (unshrunk) for a row of bin codes.
    double predict_binned(const BinnedMatrix& data, std::size_t row) const;
    double predict(std::span<const double> x, const FeatureBinning& binning) const;

    bool operator==(const Tree&) const = default;

private:
    std::vector<TreeNode> nodes_;
};

struct LeafStats {
    std::int32_t node = 0;
    double g = 0.0;
    double h = 0.0;
    std::uint32_t count = 0;
    std::uint32_t depth = 0;
};

struct GrownTree {
    Tree tree;
    std::vector<LeafStats> leaves;
};

// Leaf-wise growth: repeatedly splits the leaf with the largest gain until
// num_leaves is reached, max_depth blocks every leaf, or no split has
// positive gain. Children histograms use the subtraction trick.
GrownTree grow_tree(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                    std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                    const GbdtConfig& config, int threads = 1);

using ClassScores = std::array<double, kNumClasses>;

ClassScores softmax(const ClassScores& raw);
double cross_entropy(const ClassScores& raw, Sentiment truth);
// g_k = p_k - 1[k == truth], h_k = p_k (1 - p_k).
std::array<GradientPair, kNumClasses> compute_gradients(const ClassScores& raw, Sentiment truth);
// Argmax over [-1, 0, 1]; ties go to the more negative label.
Sentiment argmax_label(const ClassScores& probabilities);

inline constexpr char kGbdtMagic[] = "TNZGBM01";

class GbdtModel {
public:
    GbdtModel() = default;
    GbdtModel(GbdtConfig config, FeatureBinning binning, ClassScores init_scores,
              std::vector<std::array<Tree, kNumClasses>> rounds);

    const GbdtConfig& config() const noexcept { return config_; }
    const FeatureBinning& binning() const noexcept { return binning_; }
    const ClassScores& init_scores() const noexcept { return init_scores_; }
    const std::vector<std::array<Tree, kNumClasses>>& rounds() const noexcept { return rounds_; }
    std::size_t dim() const noexcept { return binning_.features(); }

    // Throws Error on dimension mismatch.
    ClassScores raw_scores(std::span<const double> x) const;
    ClassScores predict_proba(std::span<const double> x) const;
    Sentiment predict_label(std::span<const double> x) const;

    std::string serialize() const;
    static GbdtModel deserialize(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static GbdtModel load(const std::filesystem::path& path);

    bool operator==(const GbdtModel&) const = default;

private:
    GbdtConfig config_;
    FeatureBinning binning_;
    ClassScores init_scores_{};
    std::vector<std::array<Tree, kNumClasses>> rounds_;
};

// Stagewise softmax boosting. `loss_trace`, if given, receives the mean
// training cross-entropy after each round. Throws TrainingError on
// single-class or non-finite input.
GbdtModel fit(const FeatureMatrix& data, const GbdtConfig& config, int threads = 1,
              std::vector<double>* loss_trace = nullptr);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

} // namespace tnz
