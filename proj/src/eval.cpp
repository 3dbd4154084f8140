#include "tnz/eval.hpp"

#include "tnz/error.hpp"
#include "tnz/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_set>

namespace tnz {

namespace {

constexpr std::array<const char*, kNumClasses> kShortNames = {"neg", "neu", "pos"};

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

} // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : cells) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
    return n;
}

ConfusionMatrix confusion(std::span<const Sentiment> y_true, std::span<const Sentiment> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw Error("confusion: " + std::to_string(y_true.size()) + " true labels vs " +
                    std::to_string(y_pred.size()) + " predictions");
    }
    if (y_true.empty()) throw Error("confusion: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) ++cm.at(y_true[i], y_pred[i]);
    return cm;
}

Metrics classification_metrics(const ConfusionMatrix& cm) {
    Metrics m;
    double correct = 0.0;
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto tp = static_cast<double>(cm.cells[c][c]);
        double predicted = 0.0;
        double actual = 0.0;
        for (std::size_t o = 0; o < kNumClasses; ++o) {
            predicted += static_cast<double>(cm.cells[o][c]);
            actual += static_cast<double>(cm.cells[c][o]);
        }
        auto& pc = m.per_class[c];
        pc.precision = safe_ratio(tp, predicted);
        pc.recall = safe_ratio(tp, actual);
        pc.f1 = safe_ratio(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
        f1_sum += pc.f1;
        correct += tp;
    }
    m.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
    m.accuracy = safe_ratio(correct, static_cast<double>(cm.total()));
    return m;
}

EvaluationReport make_report(std::span<const Sentiment> y_true, std::span<const Sentiment> y_pred, RunMetadata meta) {
    EvaluationReport r;
    r.confusion = confusion(y_true, y_pred);
    r.metrics = classification_metrics(r.confusion);
    r.meta = std::move(meta);
    return r;
}

std::string EvaluationReport::csv_header() {
    std::string h = "technique,embedding,learning_rate,max_depth,n_estimators,macro_f1,accuracy";
    for (const auto* c : kShortNames) {
        h += std::string(",precision_") + c + ",recall_" + c + ",f1_" + c;
    }
    for (const auto* t : kShortNames) {
        for (const auto* p : kShortNames) h += std::string(",cm_") + t + "_" + p;
    }
    h += ",seed,timestamp";
    return h;
}

std::string EvaluationReport::csv_row() const {
    std::string row = meta.technique + "," + meta.embedding + "," + format_double(meta.params.learning_rate) + "," +
                      std::to_string(meta.params.max_depth) + "," + std::to_string(meta.params.n_estimators) + "," +
                      format_double(metrics.macro_f1) + "," + format_double(metrics.accuracy);
    for (const auto& pc : metrics.per_class) {
        row += "," + format_double(pc.precision) + "," + format_double(pc.recall) + "," + format_double(pc.f1);
    }
    for (const auto& r : confusion.cells) {
        for (auto v : r) row += "," + std::to_string(v);
    }
    row += "," + std::to_string(meta.seed) + "," + meta.timestamp;
    return row;
}

std::string EvaluationReport::summary() const {
    std::ostringstream out;
    out << "technique: " << meta.technique << "  embedding: " << meta.embedding << "  seed: " << meta.seed << "\n";
    out << "samples: " << confusion.total() << "\n\n";
    out << "confusion (rows = true, cols = predicted)\n";
    out << std::setw(10) << "" << std::setw(10) << "-1" << std::setw(10) << "0" << std::setw(10) << "1" << "\n";
    for (std::size_t t = 0; t < kNumClasses; ++t) {
        out << std::setw(10) << to_int(class_at(t));
        for (auto v : confusion.cells[t]) out << std::setw(10) << v;
        out << "\n";
    }
    out << "\n" << std::left << std::setw(10) << "class" << std::right << std::setw(11) << "precision"
        << std::setw(10) << "recall" << std::setw(10) << "f1" << "\n";
    out << std::fixed << std::setprecision(4);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& pc = metrics.per_class[c];
        out << std::left << std::setw(10) << sentiment_name(class_at(c)) << std::right << std::setw(11) << pc.precision
            << std::setw(10) << pc.recall << std::setw(10) << pc.f1 << "\n";
    }
    out << "\naccuracy: " << metrics.accuracy << "\nmacro_f1: " << metrics.macro_f1 << "\n";
    return out.str();
}

void validate_threshold(double t) {
    if (!(t > 0.5 && t <= 1.0)) {
        throw ConfigError("threshold must be in (0.5, 1], got " + format_double(t));
    }
}

Sentiment threshold_decide(double p_positive, double t) {
    validate_threshold(t);
    if (p_positive >= t) return Sentiment::Positive;
    if (p_positive <= 1.0 - t) return Sentiment::Negative;
    return Sentiment::Neutral;
}

double tune_threshold(std::span<const double> p_positive, std::span<const Sentiment> y_true,
                      std::span<const double> candidates) {
    if (candidates.empty()) throw ConfigError("tune_threshold needs at least one candidate");
    std::vector<double> sorted(candidates.begin(), candidates.end());
    std::sort(sorted.begin(), sorted.end());
    std::optional<double> best_t;
    double best_f1 = -1.0;
    std::vector<Sentiment> pred(p_positive.size());
    for (double t : sorted) {
        for (std::size_t i = 0; i < p_positive.size(); ++i) pred[i] = threshold_decide(p_positive[i], t);
        const double f1 = macro_f1(y_true, pred);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_t = t;
        }
    }
    return *best_t;
}

SplitIndices train_test_split(std::span<const Sentiment> labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in (0, 1)");
    }
    std::array<std::vector<std::uint32_t>, kNumClasses> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[class_index(labels[i])].push_back(static_cast<std::uint32_t>(i));
    }
    Rng rng(seed);
    SplitIndices out;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& m = members[c];
        if (m.empty()) continue;
        if (m.size() < 2) {
            throw Error("class " + std::to_string(to_int(class_at(c))) + " has " + std::to_string(m.size()) +
                        " row; a stratified split needs at least 2");
        }
        rng.shuffle(std::span(m));
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(m.size())));
        out.test.insert(out.test.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n_test));
        out.train.insert(out.train.end(), m.begin() + static_cast<std::ptrdiff_t>(n_test), m.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<Fold> stratified_kfold(std::span<const Sentiment> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    std::array<std::vector<std::uint32_t>, kNumClasses> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[class_index(labels[i])].push_back(static_cast<std::uint32_t>(i));
    }
    Rng rng(seed);
    std::vector<std::uint32_t> dealt;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& m = members[c];
        if (m.empty()) continue;
        if (m.size() < k) {
            throw Error("class " + std::to_string(to_int(class_at(c))) + " has " + std::to_string(m.size()) +
                        " rows, fewer than k = " + std::to_string(k));
        }
        rng.shuffle(std::span(m));
        dealt.insert(dealt.end(), m.begin(), m.end());
    }
    std::vector<std::size_t> fold_of(labels.size());
    std::vector<Fold> folds(k);
    for (std::size_t pos = 0; pos < dealt.size(); ++pos) fold_of[dealt[pos]] = pos % k;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(static_cast<std::uint32_t>(i));
        }
    }
    return folds;
}

std::size_t ParamGrid::combinations() const {
    std::size_t n = 1;
    for (const auto& [name, values] : params) n *= values.size();
    return n;
}

std::vector<std::pair<std::string, std::string>> ParamGrid::combination(std::size_t index) const {
    std::vector<std::pair<std::string, std::string>> out(params.size());
    for (std::size_t p = params.size(); p-- > 0;) {
        const auto& values = params[p].second;
        out[p] = {params[p].first, values[index % values.size()]};
        index /= values.size();
    }
    return out;
}

void ParamGrid::validate() const {
    if (folds < 2) throw ConfigError("grid search needs at least 2 folds");
    const auto& known = gbdt_parameter_names();
    for (const auto& [name, values] : params) {
        if (values.empty()) throw ConfigError("grid parameter `" + name + "` has no values");
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw ConfigError("unknown grid parameter `" + name + "`");
        }
    }
}

void assert_no_leakage(const FeatureMatrix& balanced_train, std::span<const std::uint32_t> train_ids,
                       std::span<const std::uint32_t> validation_ids) {
    const std::unordered_set<std::uint32_t> train(train_ids.begin(), train_ids.end());
    for (auto v : validation_ids) {
        if (train.contains(v)) {
            throw LeakageError("row id " + std::to_string(v) + " is in both the training and validation folds");
        }
    }
    for (std::size_t i = 0; i < balanced_train.size(); ++i) {
        if (!train.contains(balanced_train.origin[i]) || !train.contains(balanced_train.partner[i])) {
            throw LeakageError("balanced training row " + std::to_string(i) + " derives from row id " +
                               std::to_string(balanced_train.origin[i]) + " outside the training fold");
        }
    }
}

GridResult grid_search(const FeatureMatrix& data, const ParamGrid& grid, const GridSearchSetup& setup) {
    grid.validate();
    const auto folds = stratified_kfold(data.labels, grid.folds, derive_seed(setup.seed, 0));
    const std::size_t combos = grid.combinations();
    const std::size_t total_fits = combos * grid.folds;

    GridResult result;
    result.rows.resize(combos);
    for (std::size_t c = 0; c < combos; ++c) {
        auto& row = result.rows[c];
        row.index = c;
        row.params = grid.combination(c);
        row.config = setup.base;
        for (const auto& [name, value] : row.params) row.config.set(name, value);
        row.config.seed = derive_seed(setup.seed, 1000 + c);
        row.config.validate();
        row.fold_f1.assign(grid.folds, 0.0);
    }

    struct FitError {
        std::string message;
        bool leakage = false;
    };
    std::vector<FitError> errors(total_fits);
    std::size_t fits_done = 0;
    std::size_t checks_done = 0;
    const auto n_fits = static_cast<std::ptrdiff_t>(total_fits);
#pragma omp parallel for num_threads(setup.threads) schedule(dynamic, 1) if (setup.threads > 1)
    for (std::ptrdiff_t job = 0; job < n_fits; ++job) {
        const auto c = static_cast<std::size_t>(job) / grid.folds;
        const auto f = static_cast<std::size_t>(job) % grid.folds;
        try {
            const auto& fold = folds[f];
            auto train = data.subset(fold.train);
            const auto validation = data.subset(fold.validation);
            auto balance = setup.balance;
            balance.seed = derive_seed(setup.seed, 100000 + static_cast<std::uint64_t>(job));
            balance.threads = 1;
            train = tnz::balance(train, balance);

            std::vector<std::uint32_t> train_ids;
            std::vector<std::uint32_t> validation_ids;
            for (auto i : fold.train) train_ids.push_back(data.origin[i]);
            for (auto i : fold.validation) validation_ids.push_back(data.origin[i]);
            assert_no_leakage(train, train_ids, validation_ids);
#pragma omp atomic
            ++checks_done;

            const auto model = fit(train, result.rows[c].config, 1);
#pragma omp atomic
            ++fits_done;
            std::vector<Sentiment> pred(validation.size());
            for (std::size_t i = 0; i < validation.size(); ++i) pred[i] = model.predict_label(validation.row(i));
            result.rows[c].fold_f1[f] = macro_f1(validation.labels, pred);
        } catch (const LeakageError& e) {
            errors[static_cast<std::size_t>(job)] = {e.what(), true};
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(job)] = {e.what(), false};
        }
    }

    for (std::size_t job = 0; job < total_fits; ++job) {
        if (errors[job].message.empty()) continue;
        const auto c = job / grid.folds;
        std::string params;
        for (const auto& [name, value] : result.rows[c].params) params += " " + name + "=" + value;
        const std::string message = "grid combination #" + std::to_string(c) + " (" + params.substr(params.empty() ? 0 : 1) +
                                    "), fold " + std::to_string(job % grid.folds) + ": " + errors[job].message;
        if (errors[job].leakage) throw LeakageError(message);
        throw Error(message);
    }

    for (auto& row : result.rows) {
        row.mean_f1 = std::accumulate(row.fold_f1.begin(), row.fold_f1.end(), 0.0) / static_cast<double>(grid.folds);
    }
    for (std::size_t c = 1; c < combos; ++c) {
        if (result.rows[c].mean_f1 > result.rows[result.best].mean_f1) result.best = c;
    }
    result.fit_count = fits_done;
    result.leakage_checks = checks_done;
    return result;
}

std::string grid_results_csv(const GridResult& result, const ParamGrid& grid, std::string_view technique,
                             std::string_view embedding) {
    std::vector<std::string> extra;
    for (const auto& [name, values] : grid.params) {
        if (name != "learning_rate" && name != "max_depth" && name != "n_estimators") extra.push_back(name);
    }
    std::string out = "technique,embedding,learning_rate,max_depth,n_estimators,macro_f1";
    for (const auto& e : extra) out += "," + e;
    out += ",fold_f1\n";
    for (const auto& row : result.rows) {
        out += std::string(technique) + "," + std::string(embedding) + "," + format_double(row.config.learning_rate) +
               "," + std::to_string(row.config.max_depth) + "," + std::to_string(row.config.n_estimators) + "," +
               format_double(row.mean_f1);
        for (const auto& e : extra) {
            for (const auto& [name, value] : row.params) {
                if (name == e) out += "," + value;
            }
        }
        out += ",";
        for (std::size_t f = 0; f < row.fold_f1.size(); ++f) {
            out += (f ? ";" : "") + format_double(row.fold_f1[f]);
        }
        out += "\n";
    }
    return out;
}

} // namespace tnz
