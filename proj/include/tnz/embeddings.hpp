#pragma once

#include "tnz/bpe.hpp"
#include "tnz/corpus.hpp"
#include "tnz/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tnz {

enum class EmbeddingKind : std::uint8_t { FastText = 0, Bpe = 1 };

std::string_view embedding_kind_name(EmbeddingKind kind);
std::optional<EmbeddingKind> parse_embedding_kind(std::string_view name);

struct EmbedConfig {
    EmbeddingKind kind = EmbeddingKind::FastText;
    std::uint32_t dim = 100;
    std::uint32_t window = 5;
    std::uint32_t negatives = 5;
    std::uint32_t epochs = 5;
    double learning_rate = 0.05;
    std::uint32_t n_min = 3;
    std::uint32_t n_max = 6;
    std::uint32_t bucket_count = 1U << 18;
    std::uint32_t min_count = 2;
    std::uint32_t bpe_merges = 1000;
    std::uint64_t seed = 1;

    // Throws ConfigError.
    void validate() const;
};

class Vocabulary {
public:
    struct Entry {
        std::string word;
        std::uint64_t count = 0;

        bool operator==(const Entry&) const = default;
    };

    Vocabulary() = default;
    // Entries must already be in id order.
    Vocabulary(std::vector<Entry> entries, std::uint32_t min_count);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const Entry& operator[](std::size_t id) const { return entries_[id]; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::optional<std::uint32_t> find(std::string_view word) const;

    std::uint32_t min_count() const noexcept { return min_count_; }
    // Sum of kept word frequencies.
    std::uint64_t total_tokens() const noexcept { return total_tokens_; }

    // min_count is not persisted, so equality covers the entries only.
    bool operator==(const Vocabulary& other) const { return entries_ == other.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint32_t min_count_ = 1;
    std::uint64_t total_tokens_ = 0;
};

// Words with frequency >= min_count, ordered by descending frequency then
// lexicographically. Throws TrainingError when nothing survives.
Vocabulary build_vocab(std::span<const TokenizedDocument> corpus, std::uint32_t min_count);

struct SubwordIndex {
    std::uint32_t n_min = 3;
    std::uint32_t n_max = 6;
    std::uint32_t bucket_count = 1U << 18;

    void validate() const;
};

std::uint32_t fnv1a32(std::string_view bytes);

// Character n-grams of `<word>` ordered by n, then left to right. The whole
// wrapped word is skipped unless it is the only n-gram available.
std::vector<std::string> character_ngrams(std::string_view word, std::uint32_t n_min, std::uint32_t n_max);

// Bucket ids (in [0, bucket_count)) of the word's character n-grams.
std::vector<std::uint32_t> extract_ngrams(std::string_view word, const SubwordIndex& index);

class EmbeddingModel {
public:
    EmbeddingModel() = default;

    // Input rows: V word rows followed by the subword rows (hash buckets for
    // FastText, BPE subunits for Bpe). Output rows: V.
    EmbeddingModel(EmbeddingKind kind, std::uint32_t dim, Vocabulary vocab, SubwordIndex subwords,
                   BpeModel bpe, DenseMatrix<float> input, DenseMatrix<float> output);

    EmbeddingKind kind() const noexcept { return kind_; }
    std::uint32_t dim() const noexcept { return dim_; }
    const Vocabulary& vocab() const noexcept { return vocab_; }
    const SubwordIndex& subwords() const noexcept { return subwords_; }
    const BpeModel& bpe() const noexcept { return bpe_; }
    const DenseMatrix<float>& input_vectors() const noexcept { return input_; }
    const DenseMatrix<float>& output_vectors() const noexcept { return output_; }
    std::uint32_t subword_rows() const noexcept;

    // Input-matrix rows averaged to represent `word`: its own row when it is
    // in the vocabulary, then its subword rows.
    std::vector<std::uint32_t> input_rows(std::string_view word) const;

    // Mean of input_rows(word); zero vector if there are none.
    std::vector<double> word_vector(std::string_view word) const;

    // Mean of word vectors; an empty token list yields the zero vector.
    std::vector<double> sentence_vector(std::span<const std::string> tokens) const;

    void save(const std::filesystem::path& path) const;
    // n-gram bounds are not part of the file; the caller supplies them.
    static EmbeddingModel load(const std::filesystem::path& path, std::uint32_t n_min, std::uint32_t n_max);

    std::string serialize() const;
    static EmbeddingModel deserialize(std::string_view bytes, std::uint32_t n_min, std::uint32_t n_max);

    bool operator==(const EmbeddingModel& other) const;

private:
    // Subword rows (absolute input-matrix ids) for a word.
    std::vector<std::uint32_t> subword_row_ids(std::string_view word) const;

    EmbeddingKind kind_ = EmbeddingKind::FastText;
    std::uint32_t dim_ = 0;
    Vocabulary vocab_;
    SubwordIndex subwords_;
    BpeModel bpe_;
    DenseMatrix<float> input_;
    DenseMatrix<float> output_;
};

inline constexpr char kEmbeddingMagic[] = "TNZEMB01";

struct SkipgramResult {
    EmbeddingModel model;
    // Mean negative-sampling loss per (center, context) update, per epoch.
    std::vector<double> epoch_loss;
};

// Subword skipgram with negative sampling. `threads` > 1 enables lock-free
// asynchronous workers (not reproducible); threads == 1 is deterministic.
// Throws TrainingError on an empty vocabulary or a non-finite loss.
SkipgramResult train_skipgram(std::span<const TokenizedDocument> corpus, const EmbedConfig& config,
                              int threads = 1);

// --- negative-sampling kernel ------------------------------------------------

inline double log_sigmoid(double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Loss of one center representation against targets[0] (positive) and
// targets[1..] (negatives): -log s(o_pos.h) - sum log s(-o_neg.h), where h is
// the mean of the given input rows.
template <typename Real>
double skipgram_loss(const DenseMatrix<Real>& input, const DenseMatrix<Real>& output,
                     std::span<const std::uint32_t> input_rows, std::span<const std::uint32_t> targets) {
    const std::size_t dim = input.cols;
    std::vector<double> hidden(dim, 0.0);
    for (auto r : input_rows) {
        for (std::size_t d = 0; d < dim; ++d) hidden[d] += input(r, d);
    }
    for (auto& v : hidden) v /= static_cast<double>(input_rows.size());

    double loss = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        double score = 0.0;
        for (std::size_t d = 0; d < dim; ++d) score += output(targets[j], d) * hidden[d];
        loss -= log_sigmoid(j == 0 ? score : -score);
    }
    return loss;
}

// How the hidden-layer gradient reaches the input rows. Exact divides it by
// the row count (true gradient of the mean); Shared adds it whole to every
// row, as the reference skipgram trainer does.
enum class InputUpdate { Exact, Shared };

// One SGD step on the loss above with step size `lr`; returns the loss
// before the step. `hidden` and `grad` are caller-owned scratch of size dim.
template <typename Real>
double skipgram_step(DenseMatrix<Real>& input, DenseMatrix<Real>& output,
                     std::span<const std::uint32_t> input_rows, std::span<const std::uint32_t> targets,
                     Real lr, std::span<Real> hidden, std::span<Real> grad,
                     InputUpdate update = InputUpdate::Exact) {
    const std::size_t dim = input.cols;
    const Real scale = Real(1) / static_cast<Real>(input_rows.size());
    std::fill(hidden.begin(), hidden.end(), Real(0));
    std::fill(grad.begin(), grad.end(), Real(0));
    for (auto r : input_rows) {
        const Real* src = &input(r, 0);
        for (std::size_t d = 0; d < dim; ++d) hidden[d] += src[d];
    }
    for (auto& v : hidden) v *= scale;

    double loss = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        Real* out = &output(targets[j], 0);
        Real score = 0;
        for (std::size_t d = 0; d < dim; ++d) score += out[d] * hidden[d];
        const bool positive = j == 0;
        loss -= log_sigmoid(positive ? score : -score);
        const Real coeff = lr * ((positive ? Real(1) : Real(0)) - static_cast<Real>(sigmoid(score)));
        for (std::size_t d = 0; d < dim; ++d) {
            grad[d] += coeff * out[d];
            out[d] += coeff * hidden[d];
        }
    }
    // d(hidden)/d(row) = 1/|rows| for every contributing row.
    const Real row_scale = update == InputUpdate::Exact ? scale : Real(1);
    for (auto r : input_rows) {
        Real* dst = &input(r, 0);
        for (std::size_t d = 0; d < dim; ++d) dst[d] += grad[d] * row_scale;
    }
    return loss;
}

} // namespace tnz
