#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace tnz {

// Sentiment polarity. The underlying values are the dataset literals.
enum class Sentiment : std::int8_t { Negative = -1, Neutral = 0, Positive = 1 };

inline constexpr std::size_t kNumClasses = 3;

// Class index order is fixed as [-1, 0, 1] everywhere in the library.
inline constexpr std::array<Sentiment, kNumClasses> kClassOrder = {
    Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive};

constexpr std::size_t class_index(Sentiment s) {
    return static_cast<std::size_t>(static_cast<int>(s) + 1);
}

constexpr Sentiment class_at(std::size_t index) { return kClassOrder[index]; }

constexpr int to_int(Sentiment s) { return static_cast<int>(s); }

// Accepts exactly "-1", "0" or "1".
std::optional<Sentiment> parse_sentiment(std::string_view literal);

std::string_view sentiment_name(Sentiment s);

struct LabeledDocument {
    std::string text;
    Sentiment label = Sentiment::Neutral;
};

struct LabeledCorpus {
    std::vector<LabeledDocument> documents;
    std::string source_path;

    std::size_t size() const noexcept { return documents.size(); }
    bool empty() const noexcept { return documents.empty(); }
};

struct TokenizedDocument {
    std::vector<std::string> tokens;
    Sentiment label = Sentiment::Neutral;
};

struct ClassDistribution {
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> proportions{};

    std::size_t count(Sentiment s) const { return counts[class_index(s)]; }
    double proportion(Sentiment s) const { return proportions[class_index(s)]; }
    std::size_t total() const;
};

// Reads a `label<TAB>text` file. Blank lines are skipped, a trailing CR is
// stripped. Throws ParseError (with line number), EncodingError or
// EmptyDatasetError.
LabeledCorpus load_dataset(const std::filesystem::path& path);

// Same as load_dataset but from an in-memory buffer.
LabeledCorpus parse_dataset(std::string_view content, std::string source_path = {});

bool is_valid_utf8(std::string_view text);

// Removes URLs, emoji, symbols (So/Sk/Sm) and punctuation (P*), collapses
// whitespace, trims and lowercases.
std::string clean_text(std::string_view raw);

// Lowercases and splits on maximal runs of non-alphanumeric codepoints.
std::vector<std::string> tokenize(std::string_view cleaned);

std::vector<std::string> remove_stopwords(std::span<const std::string> tokens,
                                          const std::unordered_set<std::string>& stoplist);

// Longest-match suffix stripper. A suffix is removed only if at least
// `min_stem_length` codepoints remain; stripping repeats until no rule applies.
class Stemmer {
public:
    static constexpr std::size_t kDefaultMinStemLength = 3;

    explicit Stemmer(std::vector<std::string> suffixes = {},
                     std::size_t min_stem_length = kDefaultMinStemLength);

    std::string stem(std::string_view token) const;

    const std::vector<std::string>& suffixes() const noexcept { return suffixes_; }
    std::size_t min_stem_length() const noexcept { return min_stem_length_; }

private:
    std::vector<std::string> suffixes_; // longest first
    std::size_t min_stem_length_;
};

// One entry per line, `#` comment lines and blank lines ignored, entries
// trimmed. Used for stopword lists and stem-rule files.
std::vector<std::string> load_word_list(const std::filesystem::path& path);

ClassDistribution class_histogram(std::span<const Sentiment> labels);
ClassDistribution class_histogram(const LabeledCorpus& corpus);

// clean -> tokenize -> stopword removal -> optional stemming.
class Preprocessor {
public:
    Preprocessor() = default;
    Preprocessor(std::unordered_set<std::string> stopwords, std::optional<Stemmer> stemmer);

    std::vector<std::string> operator()(std::string_view raw) const;
    TokenizedDocument operator()(const LabeledDocument& doc) const;
    std::vector<TokenizedDocument> operator()(const LabeledCorpus& corpus) const;

private:
    std::unordered_set<std::string> stopwords_;
    std::optional<Stemmer> stemmer_;
};

// Codepoint helpers shared with the embedding code.
std::vector<char32_t> decode_utf8(std::string_view text);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::span<const char32_t> cps);
std::size_t codepoint_count(std::string_view text);

} // namespace tnz
