#include "tnz/bpe.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace tnz {

namespace {

std::string pair_key(std::string_view left, std::string_view right) {
    std::string key;
    key.reserve(left.size() + right.size() + 1);
    key.append(left);
    key.push_back('\x1f');
    key.append(right);
    return key;
}

std::vector<std::string> split_chars(std::string_view word) {
    std::vector<std::string> symbols;
    for (char32_t cp : decode_utf8(word)) {
        std::string s;
        append_utf8(s, cp);
        symbols.push_back(std::move(s));
    }
    return symbols;
}

// Merges every non-overlapping occurrence of (left, right), scanning left to right.
bool apply_merge(std::vector<std::string>& symbols, const std::string& left, const std::string& right) {
    bool merged = false;
    std::vector<std::string> out;
    out.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
            out.push_back(left + right);
            ++i;
            merged = true;
        } else {
            out.push_back(std::move(symbols[i]));
        }
    }
    symbols = std::move(out);
    return merged;
}

} // namespace

BpeModel::BpeModel(std::vector<BpeMerge> merges, std::span<const std::string> alphabet_words)
    : merges_(std::move(merges)) {
    std::set<std::string> alphabet;
    auto add_chars = [&](std::string_view s) {
        for (auto& c : split_chars(s)) {
            alphabet.insert(std::move(c));
        }
    };
    for (const auto& w : alphabet_words) {
        add_chars(w);
    }
    for (const auto& m : merges_) {
        add_chars(m.left);
        add_chars(m.right);
    }

    auto add_unit = [this](const std::string& unit) {
        if (subunit_index_.emplace(unit, static_cast<std::uint32_t>(subunits_.size())).second) {
            subunits_.push_back(unit);
        }
    };
    for (const auto& c : alphabet) {
        add_unit(c);
    }
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        add_unit(merges_[i].left + merges_[i].right);
        merge_rank_.emplace(pair_key(merges_[i].left, merges_[i].right), static_cast<std::uint32_t>(i));
    }
}

std::optional<std::uint32_t> BpeModel::subunit_id(std::string_view unit) const {
    const auto it = subunit_index_.find(std::string(unit));
    if (it == subunit_index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<std::string> BpeModel::segment(std::string_view word) const {
    auto symbols = split_chars(word);
    // Applying the lowest-ranked adjacent pair repeatedly is equivalent to
    // replaying the merge list in order: a merge product only takes part in
    // merges learned after it.
    while (symbols.size() > 1) {
        std::uint32_t best_rank = UINT32_MAX;
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            const auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_rank_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank == UINT32_MAX) {
            break;
        }
        const auto left = symbols[best_pos];
        const auto right = symbols[best_pos + 1];
        apply_merge(symbols, left, right);
    }
    return symbols;
}

BpeModel learn_bpe(const std::vector<std::pair<std::string, std::uint64_t>>& word_counts,
                   std::size_t num_merges) {
    struct Entry {
        std::vector<std::string> symbols;
        std::uint64_t count;
    };
    std::vector<Entry> entries;
    std::vector<std::string> words;
    entries.reserve(word_counts.size());
    for (const auto& [word, count] : word_counts) {
        entries.push_back({split_chars(word), count});
        words.push_back(word);
    }

    std::vector<BpeMerge> merges;
    while (merges.size() < num_merges) {
        std::map<std::pair<std::string, std::string>, std::uint64_t> pair_counts;
        for (const auto& e : entries) {
            for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i) {
                pair_counts[{e.symbols[i], e.symbols[i + 1]}] += e.count;
            }
        }
        // std::map iterates in lexicographic pair order, so strict > keeps the
        // smallest pair among equal counts.
        const std::pair<std::string, std::string>* best = nullptr;
        std::uint64_t best_count = 0;
        for (const auto& [p, c] : pair_counts) {
            if (c > best_count) {
                best = &p;
                best_count = c;
            }
        }
        if (best == nullptr || best_count < 2) {
            break;
        }
        const BpeMerge merge{best->first, best->second};
        for (auto& e : entries) {
            apply_merge(e.symbols, merge.left, merge.right);
        }
        merges.push_back(merge);
    }
    return BpeModel(std::move(merges), words);
}

BpeModel learn_bpe(std::span<const TokenizedDocument> corpus, std::size_t num_merges) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& t : doc.tokens) {
            ++counts[t];
        }
    }
    return learn_bpe(std::vector<std::pair<std::string, std::uint64_t>>(counts.begin(), counts.end()),
                     num_merges);
}

} // namespace tnz
