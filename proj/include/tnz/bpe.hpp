#pragma once

#include "tnz/corpus.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tnz {

struct BpeMerge {
    std::string left;
    std::string right;

    bool operator==(const BpeMerge&) const = default;
};

// Ordered merge list plus the table of subunits it can produce. Subunit ids
// are the sorted single codepoints of the alphabet followed by merge
// products in merge order.
class BpeModel {
public:
    BpeModel() = default;

    // `alphabet_words` supplies the base characters; characters occurring in
    // merges are always included.
    BpeModel(std::vector<BpeMerge> merges, std::span<const std::string> alphabet_words);

    const std::vector<BpeMerge>& merges() const noexcept { return merges_; }
    const std::vector<std::string>& subunits() const noexcept { return subunits_; }
    std::optional<std::uint32_t> subunit_id(std::string_view unit) const;

    // Applies merges greedily in learned priority order.
    std::vector<std::string> segment(std::string_view word) const;

    bool operator==(const BpeModel& other) const {
        return merges_ == other.merges_ && subunits_ == other.subunits_;
    }

private:
    std::vector<BpeMerge> merges_;
    std::vector<std::string> subunits_;
    std::unordered_map<std::string, std::uint32_t> subunit_index_;
    std::unordered_map<std::string, std::uint32_t> merge_rank_;
};

// Learns up to `num_merges` merges from token frequencies. The most frequent
// adjacent pair wins, ties go to the lexicographically smallest pair, and
// learning stops early when no pair occurs at least twice.
BpeModel learn_bpe(std::span<const TokenizedDocument> corpus, std::size_t num_merges);

// Frequency-map overload used by the corpus overload and by tests.
BpeModel learn_bpe(const std::vector<std::pair<std::string, std::uint64_t>>& word_counts,
                   std::size_t num_merges);

} // namespace tnz
