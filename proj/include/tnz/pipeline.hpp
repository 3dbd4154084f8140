#pragma once

#include "tnz/balancing.hpp"
#include "tnz/corpus.hpp"
#include "tnz/embeddings.hpp"
#include "tnz/error.hpp"
#include "tnz/eval.hpp"
#include "tnz/gbdt.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tnz {

// Error raised inside a named pipeline stage; the message is prefixed with
// the stage name.
class StageError : public Error {
public:
    using Error::Error;
};

// Flat `key = value` configuration with dotted section prefixes. Stage
// seeds are derived from the single master `seed`.
struct PipelineConfig {
    std::string dataset;
    std::string output = "tnz-out";
    std::uint64_t seed = 1;
    int threads = 1;

    std::string stopwords_file;
    std::string stem_rules_file;
    bool stem = false;

    EmbedConfig embedding;
    BalanceConfig balance;
    GbdtConfig gbdt;

    double test_fraction = 0.30;
    std::size_t folds = 5;

    bool threshold_enabled = false;
    double threshold = 0.7;

    ParamGrid grid;

    // Throws ConfigError on unknown keys or bad values.
    void set(std::string_view key, std::string_view value);

    static PipelineConfig parse(std::string_view text);
    static PipelineConfig load(const std::filesystem::path& path);

    // Every key in fixed order; parse(snapshot()) reproduces this config.
    std::string snapshot(bool include_grid = true) const;

    // Checks value ranges and that referenced files exist.
    void validate(bool require_dataset = true) const;

    // Stage seeds.
    std::uint64_t split_seed() const;
    std::uint64_t embedding_seed() const;
    std::uint64_t balance_seed() const;
    std::uint64_t gbdt_seed() const;
    std::uint64_t grid_seed() const;

    Preprocessor make_preprocessor() const;
};

// Artifact file names inside an output directory.
struct ArtifactPaths {
    std::filesystem::path dir;

    std::filesystem::path embedding() const { return dir / "embedding.bin"; }
    std::filesystem::path classifier() const { return dir / "gbdt.txt"; }
    std::filesystem::path report() const { return dir / "report.csv"; }
    std::filesystem::path summary() const { return dir / "summary.txt"; }
    std::filesystem::path config() const { return dir / "config.txt"; }
};

// Everything a training run produced, plus the audit trail the leakage
// checks are based on.
struct TrainOutcome {
    ArtifactPaths paths;
    EvaluationReport report;
    SplitIndices split;
    // Dataset row indices whose text was given to the embedding trainer.
    std::vector<std::uint32_t> embedding_rows;
    // Dataset row ids behind every balanced training row (origins and partners).
    std::vector<std::uint32_t> balanced_sources;
    std::vector<double> embedding_epoch_loss;
};

// load -> clean/tokenize -> stratified split -> embeddings on the training
// split -> vectorize -> balance training vectors -> fit -> evaluate on the
// held-out split -> write artifacts to config.output.
TrainOutcome cmd_train(const PipelineConfig& config);

// A trained pipeline loaded from an artifact directory.
class SentimentPipeline {
public:
    static SentimentPipeline load(const std::filesystem::path& dir);

    const PipelineConfig& config() const noexcept { return config_; }
    const EmbeddingModel& embedding() const noexcept { return embedding_; }
    const GbdtModel& classifier() const noexcept { return classifier_; }

    std::vector<double> features(std::string_view text) const;
    ClassScores predict_proba(std::string_view text) const;
    // Argmax by default; the positive-vs-rest threshold rule when given.
    Sentiment predict_label(const ClassScores& probabilities, std::optional<double> threshold) const;

private:
    PipelineConfig config_;
    Preprocessor preprocessor_;
    EmbeddingModel embedding_;
    GbdtModel classifier_;
};

// `label<TAB>p_neg<TAB>p_neu<TAB>p_pos<TAB>text`.
std::string format_prediction(Sentiment label, const ClassScores& p, std::string_view text);

// Scores each input line; returns the number of lines written.
std::size_t cmd_predict(const SentimentPipeline& pipeline, std::istream& input, std::ostream& output,
                        std::optional<double> threshold);

// Writes evaluation.csv and evaluation.txt into `output_dir`.
EvaluationReport cmd_evaluate(const SentimentPipeline& pipeline, const LabeledCorpus& data,
                              const std::filesystem::path& output_dir, std::optional<double> threshold);

// One row per variant; each variant is a balancing technique (US, OS, SMOTE,
// ADASYN, none) or an embedding kind (fasttext, bpe). Writes compare.csv.
struct CompareRow {
    std::string name;
    EvaluationReport report;
};
std::vector<CompareRow> cmd_compare(const PipelineConfig& config, const std::vector<std::string>& variants);
std::string compare_csv(const std::vector<CompareRow>& rows);

struct GridSearchOutcome {
    GridResult result;
    PipelineConfig best;
    std::filesystem::path results_csv;
    std::filesystem::path best_config;
};

// Grid search over the training split's sentence vectors. Writes
// grid_results.csv and best_config.txt; logs the fit count to `log`.
GridSearchOutcome cmd_grid_search(const PipelineConfig& config, std::ostream& log);

struct ReportOutcome {
    ClassDistribution distribution;
    std::string text;
    std::string csv;
};

// Counts, proportions and an ASCII bar chart of the class distribution.
ReportOutcome cmd_report(const LabeledCorpus& data);

} // namespace tnz
