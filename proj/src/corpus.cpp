#include "tnz/corpus.hpp"

#include "tnz/error.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tnz {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

bool is_emoji(char32_t cp) {
    return (cp >= 0x1F300 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) || cp == 0xFE0F;
}

bool is_removed_symbol(char32_t cp) {
    const auto mask = U_GET_GC_MASK(static_cast<UChar32>(cp));
    return (mask & (U_GC_P_MASK | U_GC_SO_MASK | U_GC_SK_MASK | U_GC_SM_MASK)) != 0 || is_emoji(cp);
}

bool is_alnum(char32_t cp) {
    return (U_GET_GC_MASK(static_cast<UChar32>(cp)) & (U_GC_L_MASK | U_GC_N_MASK)) != 0;
}

bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0; }

char32_t to_lower(char32_t cp) { return static_cast<char32_t>(u_tolower(static_cast<UChar32>(cp))); }

char32_t ascii_lower(char32_t cp) { return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp; }

bool starts_with_ci(const std::vector<char32_t>& cps, std::size_t pos, std::string_view prefix) {
    if (cps.size() - pos < prefix.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (ascii_lower(cps[pos + i]) != static_cast<char32_t>(prefix[i])) {
            return false;
        }
    }
    return true;
}

bool url_starts_at(const std::vector<char32_t>& cps, std::size_t pos) {
    return starts_with_ci(cps, pos, "http://") || starts_with_ci(cps, pos, "https://") ||
           starts_with_ci(cps, pos, "www.");
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace

std::optional<Sentiment> parse_sentiment(std::string_view literal) {
    if (literal == "-1") return Sentiment::Negative;
    if (literal == "0") return Sentiment::Neutral;
    if (literal == "1") return Sentiment::Positive;
    return std::nullopt;
}

std::string_view sentiment_name(Sentiment s) {
    switch (s) {
    case Sentiment::Negative: return "negative";
    case Sentiment::Neutral: return "neutral";
    case Sentiment::Positive: return "positive";
    }
    return "unknown";
}

std::size_t ClassDistribution::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t i = 0;
    while (i < length) {
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        out.push_back(c < 0 ? kReplacement : static_cast<char32_t>(c));
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    std::uint8_t buf[U8_MAX_LENGTH];
    std::int32_t len = 0;
    UBool error = false;
    U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(cp), error);
    if (error) {
        len = 0;
        U8_APPEND_UNSAFE(buf, len, kReplacement);
    }
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

std::string encode_utf8(std::span<const char32_t> cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) {
        append_utf8(out, cp);
    }
    return out;
}

std::size_t codepoint_count(std::string_view text) { return decode_utf8(text).size(); }

bool is_valid_utf8(std::string_view text) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t i = 0;
    while (i < length) {
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        if (c < 0) {
            return false;
        }
    }
    return true;
}

LabeledCorpus parse_dataset(std::string_view content, std::string source_path) {
    LabeledCorpus corpus;
    corpus.source_path = std::move(source_path);

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) {
            end = content.size();
        }
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (trim(line).empty()) {
            continue;
        }
        if (!is_valid_utf8(line)) {
            throw EncodingError(corpus.source_path + ": line " + std::to_string(line_no) +
                                ": invalid UTF-8");
        }
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw ParseError(line_no, "expected `label<TAB>text`");
        }
        const auto label = parse_sentiment(line.substr(0, tab));
        if (!label) {
            throw ParseError(line_no, "label must be -1, 0 or 1, got `" +
                                          std::string(line.substr(0, tab)) + "`");
        }
        const auto text = line.substr(tab + 1);
        if (trim(text).empty()) {
            throw ParseError(line_no, "empty text");
        }
        corpus.documents.push_back({std::string(text), *label});
    }

    if (corpus.documents.empty()) {
        throw EmptyDatasetError("dataset `" + corpus.source_path + "` contains no records");
    }
    return corpus;
}

LabeledCorpus load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open dataset `" + path.string() + "`");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset(buffer.str(), path.string());
}

std::string clean_text(std::string_view raw) {
    const auto cps = decode_utf8(raw);
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;

    for (std::size_t i = 0; i < cps.size();) {
        if (url_starts_at(cps, i)) {
            while (i < cps.size() && !is_space(cps[i])) {
                ++i;
            }
            pending_space = true;
            continue;
        }
        const char32_t cp = cps[i++];
        if (is_space(cp) || is_removed_symbol(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        append_utf8(out, to_lower(cp));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view cleaned) {
    std::vector<std::string> tokens;
    std::string current;
    for (char32_t cp : decode_utf8(cleaned)) {
        if (is_alnum(cp)) {
            append_utf8(current, to_lower(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<std::string> remove_stopwords(std::span<const std::string> tokens,
                                          const std::unordered_set<std::string>& stoplist) {
    std::vector<std::string> kept;
    kept.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (!stoplist.contains(t)) {
            kept.push_back(t);
        }
    }
    return kept;
}

Stemmer::Stemmer(std::vector<std::string> suffixes, std::size_t min_stem_length)
    : suffixes_(std::move(suffixes)), min_stem_length_(min_stem_length) {
    std::erase_if(suffixes_, [](const std::string& s) { return s.empty(); });
    // Longest first so the first hit is the longest match; ties lexicographic.
    std::sort(suffixes_.begin(), suffixes_.end(), [](const std::string& a, const std::string& b) {
        const auto la = codepoint_count(a);
        const auto lb = codepoint_count(b);
        return la != lb ? la > lb : a < b;
    });
    suffixes_.erase(std::unique(suffixes_.begin(), suffixes_.end()), suffixes_.end());
}

std::string Stemmer::stem(std::string_view token) const {
    std::string current(token);
    bool changed = true;
    while (changed) {
        changed = false;
        const auto length = codepoint_count(current);
        for (const auto& suffix : suffixes_) {
            const auto suffix_length = codepoint_count(suffix);
            if (length < suffix_length + min_stem_length_ || !current.ends_with(suffix)) {
                continue;
            }
            current.resize(current.size() - suffix.size());
            changed = true;
            break;
        }
    }
    return current;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open word list `" + path.string() + "`");
    }
    std::vector<std::string> words;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto entry = trim(line);
        if (entry.empty() || entry.front() == '#') {
            continue;
        }
        if (!is_valid_utf8(entry)) {
            throw EncodingError(path.string() + ": line " + std::to_string(line_no) +
                                ": invalid UTF-8");
        }
        words.emplace_back(entry);
    }
    return words;
}

ClassDistribution class_histogram(std::span<const Sentiment> labels) {
    if (labels.empty()) {
        throw EmptyDatasetError("class histogram of an empty corpus");
    }
    ClassDistribution dist;
    for (auto label : labels) {
        ++dist.counts[class_index(label)];
    }
    const auto n = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        dist.proportions[c] = static_cast<double>(dist.counts[c]) / n;
    }
    return dist;
}

ClassDistribution class_histogram(const LabeledCorpus& corpus) {
    std::vector<Sentiment> labels;
    labels.reserve(corpus.size());
    for (const auto& doc : corpus.documents) {
        labels.push_back(doc.label);
    }
    return class_histogram(labels);
}

Preprocessor::Preprocessor(std::unordered_set<std::string> stopwords, std::optional<Stemmer> stemmer)
    : stopwords_(std::move(stopwords)), stemmer_(std::move(stemmer)) {}

std::vector<std::string> Preprocessor::operator()(std::string_view raw) const {
    auto tokens = tokenize(clean_text(raw));
    if (!stopwords_.empty()) {
        tokens = remove_stopwords(tokens, stopwords_);
    }
    if (stemmer_) {
        for (auto& t : tokens) {
            t = stemmer_->stem(t);
        }
    }
    return tokens;
}

TokenizedDocument Preprocessor::operator()(const LabeledDocument& doc) const {
    return {(*this)(doc.text), doc.label};
}

std::vector<TokenizedDocument> Preprocessor::operator()(const LabeledCorpus& corpus) const {
    std::vector<TokenizedDocument> out;
    out.reserve(corpus.size());
    for (const auto& doc : corpus.documents) {
        out.push_back((*this)(doc));
    }
    return out;
}

} // namespace tnz
