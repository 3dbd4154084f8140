#include "tnz/balancing.hpp"

#include "tnz/error.hpp"
#include "tnz/kernels.hpp"
#include "tnz/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace tnz {

void FeatureMatrix::push_back(std::span<const double> values, Sentiment label) {
    const auto id = static_cast<std::uint32_t>(size());
    append(values, label, Provenance::Original, id, id);
}

void FeatureMatrix::append(std::span<const double> values, Sentiment label, Provenance prov, std::uint32_t origin_id,
                           std::uint32_t partner_id) {
    if (values.size() != rows.cols) {
        throw Error("feature row width " + std::to_string(values.size()) + " does not match " +
                    std::to_string(rows.cols));
    }
    rows.values.insert(rows.values.end(), values.begin(), values.end());
    ++rows.rows;
    labels.push_back(label);
    provenance.push_back(prov);
    origin.push_back(origin_id);
    partner.push_back(partner_id);
}

void FeatureMatrix::validate() const {
    if (rows.rows != labels.size() || provenance.size() != labels.size() || origin.size() != labels.size() ||
        partner.size() != labels.size() || rows.values.size() != rows.rows * rows.cols) {
        throw Error("feature matrix columns are misaligned");
    }
    for (double v : rows.values) {
        if (!std::isfinite(v)) {
            throw Error("feature matrix contains a non-finite value");
        }
    }
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::uint32_t> indices) const {
    FeatureMatrix out(dim());
    out.rows.values.reserve(indices.size() * dim());
    for (auto i : indices) {
        out.append(row(i), labels[i], provenance[i], origin[i], partner[i]);
    }
    return out;
}

std::string_view balance_technique_name(BalanceTechnique t) {
    switch (t) {
    case BalanceTechnique::None: return "none";
    case BalanceTechnique::Under: return "under";
    case BalanceTechnique::Over: return "over";
    case BalanceTechnique::Smote: return "smote";
    case BalanceTechnique::Adasyn: return "adasyn";
    }
    return "none";
}

std::optional<BalanceTechnique> parse_balance_technique(std::string_view name) {
    for (auto t : {BalanceTechnique::None, BalanceTechnique::Under, BalanceTechnique::Over, BalanceTechnique::Smote,
                   BalanceTechnique::Adasyn}) {
        if (balance_technique_name(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

void BalanceConfig::validate() const {
    if (k_neighbors < 1) {
        throw ConfigError("k_neighbors must be >= 1");
    }
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw ConfigError("beta must be in (0, 1]");
    }
}

namespace {

using ClassMembers = std::array<std::vector<std::uint32_t>, kNumClasses>;

ClassMembers members_by_class(const FeatureMatrix& data) {
    ClassMembers members;
    for (std::size_t i = 0; i < data.size(); ++i) {
        members[class_index(data.labels[i])].push_back(static_cast<std::uint32_t>(i));
    }
    return members;
}

// Checks the input and returns the per-class member lists.
ClassMembers checked_members(const FeatureMatrix& data) {
    data.validate();
    auto members = members_by_class(data);
    const auto present = std::count_if(members.begin(), members.end(), [](const auto& m) { return !m.empty(); });
    if (present < 2) {
        throw Error("balancing needs at least two classes with rows");
    }
    return members;
}

std::size_t majority_count(const ClassMembers& members) {
    std::size_t m = 0;
    for (const auto& c : members) m = std::max(m, c.size());
    return m;
}

void require_neighbors(const std::vector<std::uint32_t>& rows, std::size_t c) {
    if (rows.size() < 2) {
        throw Error("class " + std::to_string(to_int(class_at(c))) + " (" + std::string(sentiment_name(class_at(c))) +
                    ") has a single row; synthetic sampling needs a same-class neighbor");
    }
}

void append_synthetic(FeatureMatrix& out, const FeatureMatrix& data, std::uint32_t seed_row, std::uint32_t partner_row,
                      double lambda) {
    const auto values = interpolate(data.row(seed_row), data.row(partner_row), lambda);
    out.append(values, data.labels[seed_row], Provenance::Synthetic, data.origin[seed_row], data.origin[partner_row]);
}

} // namespace

std::vector<double> interpolate(std::span<const double> x, std::span<const double> partner, double lambda) {
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
        out[d] = x[d] + lambda * (partner[d] - x[d]);
    }
    return out;
}

FeatureMatrix random_undersample(const FeatureMatrix& data, std::uint64_t seed) {
    auto members = checked_members(data);
    std::size_t minority = SIZE_MAX;
    for (const auto& m : members) {
        if (!m.empty()) minority = std::min(minority, m.size());
    }
    Rng rng(seed);
    std::vector<std::uint32_t> keep;
    for (auto& m : members) {
        rng.shuffle(std::span(m));
        keep.insert(keep.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(std::min(minority, m.size())));
    }
    rng.shuffle(std::span(keep));
    return data.subset(keep);
}

FeatureMatrix random_oversample(const FeatureMatrix& data, std::uint64_t seed) {
    const auto members = checked_members(data);
    const auto majority = majority_count(members);
    Rng rng(seed);
    FeatureMatrix out = data;
    for (const auto& m : members) {
        if (m.empty()) continue;
        for (std::size_t n = m.size(); n < majority; ++n) {
            const auto src = m[rng.below(m.size())];
            out.append(data.row(src), data.labels[src], Provenance::Duplicated, data.origin[src], data.origin[src]);
        }
    }
    return out;
}

FeatureMatrix smote(const FeatureMatrix& data, const BalanceConfig& config) {
    config.validate();
    const auto members = checked_members(data);
    const auto majority = majority_count(members);
    Rng rng(config.seed);
    FeatureMatrix out = data;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& rows = members[c];
        if (rows.empty() || rows.size() >= majority) continue;
        require_neighbors(rows, c);
        const auto neighbors = knn_omp(data.rows, rows, rows, config.k_neighbors, config.threads);
        for (std::size_t n = rows.size(); n < majority; ++n) {
            const auto pick = rng.below(rows.size());
            const auto& nn = neighbors[pick];
            const auto partner = nn[rng.below(nn.size())];
            append_synthetic(out, data, rows[pick], partner, rng.uniform());
        }
    }
    return out;
}

std::vector<std::size_t> adasyn_allocation(std::span<const double> impurity, std::size_t total) {
    const std::size_t n = impurity.size();
    std::vector<std::size_t> alloc(n, 0);
    if (n == 0 || total == 0) return alloc;

    const double sum = std::accumulate(impurity.begin(), impurity.end(), 0.0);
    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) {
        weight[i] = sum > 0.0 ? impurity[i] / sum : 1.0 / static_cast<double>(n);
    }
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        alloc[i] = static_cast<std::size_t>(std::llround(weight[i] * static_cast<double>(total)));
        assigned += alloc[i];
    }

    // Rounding slack: top up from the highest weights, trim from the lowest.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % n) {
        if (weight[order[i]] > 0.0) {
            ++alloc[order[i]];
            ++assigned;
        }
    }
    for (std::size_t i = n; assigned > total;) {
        i = (i == 0 ? n : i) - 1;
        if (alloc[order[i]] > 0) {
            --alloc[order[i]];
            --assigned;
        }
    }
    return alloc;
}

FeatureMatrix adasyn(const FeatureMatrix& data, const BalanceConfig& config) {
    config.validate();
    const auto members = checked_members(data);
    const auto majority = majority_count(members);
    Rng rng(config.seed);
    FeatureMatrix out = data;

    std::vector<std::uint32_t> all(data.size());
    std::iota(all.begin(), all.end(), std::uint32_t{0});

    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& rows = members[c];
        if (rows.empty() || rows.size() >= majority) continue;
        const auto total = static_cast<std::size_t>(
            std::llround(config.beta * static_cast<double>(majority - rows.size())));
        if (total == 0) continue;
        require_neighbors(rows, c);

        const auto full = knn_omp(data.rows, rows, all, config.k_neighbors, config.threads);
        std::vector<double> impurity(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto other = std::count_if(full[i].begin(), full[i].end(),
                                             [&](std::uint32_t j) { return class_index(data.labels[j]) != c; });
            impurity[i] = full[i].empty() ? 0.0 : static_cast<double>(other) / static_cast<double>(full[i].size());
        }
        const auto alloc = adasyn_allocation(impurity, total);
        const auto same = knn_omp(data.rows, rows, rows, config.k_neighbors, config.threads);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t s = 0; s < alloc[i]; ++s) {
                const auto partner = same[i][rng.below(same[i].size())];
                append_synthetic(out, data, rows[i], partner, rng.uniform());
            }
        }
    }
    return out;
}

FeatureMatrix balance(const FeatureMatrix& data, const BalanceConfig& config) {
    switch (config.technique) {
    case BalanceTechnique::None: return data;
    case BalanceTechnique::Under: return random_undersample(data, config.seed);
    case BalanceTechnique::Over: return random_oversample(data, config.seed);
    case BalanceTechnique::Smote: return smote(data, config);
    case BalanceTechnique::Adasyn: return adasyn(data, config);
    }
    return data;
}

} // namespace tnz
