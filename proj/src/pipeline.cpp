#include "tnz/pipeline.hpp"

#include "tnz/error.hpp"
#include "tnz/random.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace tnz {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
    Int v{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
        throw ConfigError("`" + std::string(key) + "`: expected an integer, got `" + std::string(value) + "`");
    }
    return v;
}

double to_real(std::string_view key, std::string_view value) {
    try {
        return parse_double(value);
    } catch (const FormatError&) {
        throw ConfigError("`" + std::string(key) + "`: expected a number, got `" + std::string(value) + "`");
    }
}

bool to_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("`" + std::string(key) + "`: expected true or false, got `" + std::string(value) + "`");
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> items;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        auto end = value.find(',', pos);
        if (end == std::string_view::npos) end = value.size();
        const auto item = trim(value.substr(pos, end - pos));
        if (!item.empty()) items.emplace_back(item);
        pos = end + 1;
    }
    return items;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open `" + path.string() + "`");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write `" + path.string() + "`");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("failed writing `" + path.string() + "`");
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Runs `body`, prefixing any error with the stage name. Configuration errors
// keep their type so the CLI can report them as usage errors.
template <typename F>
auto stage(std::string_view name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const LeakageError& e) {
        throw LeakageError(std::string(name) + ": " + e.what());
    } catch (const std::exception& e) {
        throw StageError(std::string(name) + ": " + e.what());
    }
}

FeatureMatrix vectorize(const EmbeddingModel& model, const std::vector<TokenizedDocument>& docs,
                        std::span<const std::uint32_t> indices, int threads) {
    const std::size_t dim = model.dim();
    FeatureMatrix out(dim);
    out.rows = DenseMatrix<double>(indices.size(), dim);
    out.labels.resize(indices.size());
    out.provenance.assign(indices.size(), Provenance::Original);
    out.origin.assign(indices.begin(), indices.end());
    out.partner.assign(indices.begin(), indices.end());
    const auto n = static_cast<std::ptrdiff_t>(indices.size());
#pragma omp parallel for num_threads(threads) schedule(dynamic, 32) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i);
        const auto& doc = docs[indices[row]];
        const auto v = model.sentence_vector(doc.tokens);
        std::copy(v.begin(), v.end(), out.rows.row(row).begin());
        out.labels[row] = doc.label;
    }
    return out;
}

std::vector<TokenizedDocument> select(const std::vector<TokenizedDocument>& docs, std::span<const std::uint32_t> idx) {
    std::vector<TokenizedDocument> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(docs[i]);
    return out;
}

struct Prepared {
    LabeledCorpus corpus;
    std::vector<TokenizedDocument> docs;
    SplitIndices split;
    SkipgramResult embedding;
    FeatureMatrix train;
    FeatureMatrix test;
};

Prepared prepare(const PipelineConfig& config) {
    config.validate();
    Prepared p;
    p.corpus = stage("load", [&] { return load_dataset(config.dataset); });
    p.docs = stage("preprocess", [&] { return config.make_preprocessor()(p.corpus); });
    p.split = stage("split", [&] {
        std::vector<Sentiment> labels;
        for (const auto& d : p.docs) labels.push_back(d.label);
        return train_test_split(labels, config.test_fraction, config.split_seed());
    });
    p.embedding = stage("embeddings", [&] {
        const std::unordered_set<std::uint32_t> test(p.split.test.begin(), p.split.test.end());
        for (auto i : p.split.train) {
            if (test.contains(i)) throw LeakageError("row " + std::to_string(i) + " is in both train and test");
        }
        auto cfg = config.embedding;
        cfg.seed = config.embedding_seed();
        return train_skipgram(select(p.docs, p.split.train), cfg, config.threads);
    });
    stage("vectorize", [&] {
        p.train = vectorize(p.embedding.model, p.docs, p.split.train, config.threads);
        p.test = vectorize(p.embedding.model, p.docs, p.split.test, config.threads);
    });
    return p;
}

std::string display_technique(BalanceTechnique t) {
    switch (t) {
    case BalanceTechnique::None: return "nominal";
    case BalanceTechnique::Under: return "US";
    case BalanceTechnique::Over: return "OS";
    case BalanceTechnique::Smote: return "SMOTE";
    case BalanceTechnique::Adasyn: return "ADASYN";
    }
    return "nominal";
}

} // namespace

// --- config -------------------------------------------------------------------

void PipelineConfig::set(std::string_view key, std::string_view value) {
    if (key == "dataset") dataset = value;
    else if (key == "output") output = value;
    else if (key == "seed") seed = to_int<std::uint64_t>(key, value);
    else if (key == "threads") threads = to_int<int>(key, value);
    else if (key == "preprocess.stopwords") stopwords_file = value;
    else if (key == "preprocess.stem_rules") stem_rules_file = value;
    else if (key == "preprocess.stem") stem = to_bool(key, value);
    else if (key == "embedding.type") {
        const auto kind = parse_embedding_kind(value);
        if (!kind) throw ConfigError("`embedding.type` must be fasttext or bpe, got `" + std::string(value) + "`");
        embedding.kind = *kind;
    } else if (key == "embedding.dim") embedding.dim = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.window") embedding.window = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.negatives") embedding.negatives = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.epochs") embedding.epochs = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.learning_rate") embedding.learning_rate = to_real(key, value);
    else if (key == "embedding.n_min") embedding.n_min = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.n_max") embedding.n_max = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.buckets") embedding.bucket_count = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.min_count") embedding.min_count = to_int<std::uint32_t>(key, value);
    else if (key == "embedding.bpe_merges") embedding.bpe_merges = to_int<std::uint32_t>(key, value);
    else if (key == "balance.technique") {
        const auto t = parse_balance_technique(value);
        if (!t) throw ConfigError("`balance.technique` must be none, under, over, smote or adasyn");
        balance.technique = *t;
    } else if (key == "balance.k_neighbors") balance.k_neighbors = to_int<std::size_t>(key, value);
    else if (key == "balance.beta") balance.beta = to_real(key, value);
    else if (key == "split.test_fraction") test_fraction = to_real(key, value);
    else if (key == "split.k") folds = to_int<std::size_t>(key, value);
    else if (key == "threshold.enabled") threshold_enabled = to_bool(key, value);
    else if (key == "threshold.t") threshold = to_real(key, value);
    else if (key.starts_with("gbdt.")) {
        const auto name = key.substr(5);
        if (name == "seed") throw ConfigError("`gbdt.seed` is derived from `seed`");
        gbdt.set(name, value);
    } else if (key.starts_with("grid.")) {
        const std::string name(key.substr(5));
        auto values = split_list(value);
        auto it = std::find_if(grid.params.begin(), grid.params.end(), [&](const auto& p) { return p.first == name; });
        if (it != grid.params.end()) it->second = std::move(values);
        else grid.params.emplace_back(name, std::move(values));
    } else {
        throw ConfigError("unknown configuration key `" + std::string(key) + "`");
    }
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
    PipelineConfig config;
    std::size_t line_no = 0;
    for (std::size_t pos = 0; pos < text.size();) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
        }
        try {
            config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    config.grid.folds = config.folds;
    return config;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file `" + path.string() + "` does not exist");
    return parse(read_file(path));
}

std::string PipelineConfig::snapshot(bool include_grid) const {
    std::ostringstream out;
    auto kv = [&out](std::string_view key, const std::string& value) { out << key << " = " << value << "\n"; };
    out << "# dialect sentiment pipeline configuration\n";
    kv("dataset", dataset);
    kv("output", output);
    kv("seed", std::to_string(seed));
    kv("threads", std::to_string(threads));
    kv("preprocess.stopwords", stopwords_file);
    kv("preprocess.stem_rules", stem_rules_file);
    kv("preprocess.stem", stem ? "true" : "false");
    kv("embedding.type", std::string(embedding_kind_name(embedding.kind)));
    kv("embedding.dim", std::to_string(embedding.dim));
    kv("embedding.window", std::to_string(embedding.window));
    kv("embedding.negatives", std::to_string(embedding.negatives));
    kv("embedding.epochs", std::to_string(embedding.epochs));
    kv("embedding.learning_rate", format_double(embedding.learning_rate));
    kv("embedding.n_min", std::to_string(embedding.n_min));
    kv("embedding.n_max", std::to_string(embedding.n_max));
    kv("embedding.buckets", std::to_string(embedding.bucket_count));
    kv("embedding.min_count", std::to_string(embedding.min_count));
    kv("embedding.bpe_merges", std::to_string(embedding.bpe_merges));
    kv("balance.technique", std::string(balance_technique_name(balance.technique)));
    kv("balance.k_neighbors", std::to_string(balance.k_neighbors));
    kv("balance.beta", format_double(balance.beta));
    const auto gbdt_line = gbdt.to_line();
    std::istringstream fields(gbdt_line);
    std::string field;
    while (fields >> field) {
        const auto eq = field.find('=');
        const auto name = field.substr(0, eq);
        if (name != "seed") kv("gbdt." + name, field.substr(eq + 1));
    }
    kv("split.test_fraction", format_double(test_fraction));
    kv("split.k", std::to_string(folds));
    kv("threshold.enabled", threshold_enabled ? "true" : "false");
    kv("threshold.t", format_double(threshold));
    if (include_grid) {
        for (const auto& [name, values] : grid.params) {
            std::string joined;
            for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? ", " : "") + values[i];
            kv("grid." + name, joined);
        }
    }
    return out.str();
}

void PipelineConfig::validate(bool require_dataset) const {
    if (require_dataset) {
        if (dataset.empty()) throw ConfigError("no dataset given");
        if (!fs::exists(dataset)) throw ConfigError("dataset `" + dataset + "` does not exist");
    }
    for (const auto* file : {&stopwords_file, &stem_rules_file}) {
        if (!file->empty() && !fs::exists(*file)) throw ConfigError("file `" + *file + "` does not exist");
    }
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split.test_fraction must be in (0, 1)");
    if (folds < 2) throw ConfigError("split.k must be >= 2");
    if (threshold_enabled) validate_threshold(threshold);
    embedding.validate();
    balance.validate();
    gbdt.validate();
    for (const auto& [name, values] : grid.params) {
        if (values.empty()) throw ConfigError("grid parameter `" + name + "` has no values");
        GbdtConfig probe = gbdt;
        for (const auto& v : values) probe.set(name, v);
    }
}

std::uint64_t PipelineConfig::split_seed() const { return derive_seed(seed, 10); }
std::uint64_t PipelineConfig::embedding_seed() const { return derive_seed(seed, 20); }
std::uint64_t PipelineConfig::balance_seed() const { return derive_seed(seed, 30); }
std::uint64_t PipelineConfig::gbdt_seed() const { return derive_seed(seed, 40); }
std::uint64_t PipelineConfig::grid_seed() const { return derive_seed(seed, 50); }

Preprocessor PipelineConfig::make_preprocessor() const {
    std::unordered_set<std::string> stopwords;
    if (!stopwords_file.empty()) {
        for (auto& w : load_word_list(stopwords_file)) stopwords.insert(std::move(w));
    }
    std::optional<Stemmer> stemmer;
    if (stem) {
        stemmer = Stemmer(stem_rules_file.empty() ? std::vector<std::string>{} : load_word_list(stem_rules_file));
    }
    return Preprocessor(std::move(stopwords), std::move(stemmer));
}

// --- train --------------------------------------------------------------------

TrainOutcome cmd_train(const PipelineConfig& config) {
    auto prepared = prepare(config);
    TrainOutcome outcome;
    outcome.split = prepared.split;
    outcome.embedding_rows = prepared.split.train;
    outcome.embedding_epoch_loss = prepared.embedding.epoch_loss;

    auto balanced = stage("balance", [&] {
        auto cfg = config.balance;
        cfg.seed = config.balance_seed();
        cfg.threads = config.threads;
        auto out = balance(prepared.train, cfg);
        assert_no_leakage(out, prepared.split.train, prepared.split.test);
        return out;
    });
    for (std::size_t i = 0; i < balanced.size(); ++i) {
        outcome.balanced_sources.push_back(balanced.origin[i]);
        outcome.balanced_sources.push_back(balanced.partner[i]);
    }

    const auto model = stage("gbdt", [&] {
        auto cfg = config.gbdt;
        cfg.seed = config.gbdt_seed();
        return fit(balanced, cfg, config.threads);
    });

    outcome.report = stage("evaluate", [&] {
        std::vector<Sentiment> pred(prepared.test.size());
        for (std::size_t i = 0; i < prepared.test.size(); ++i) {
            const auto p = model.predict_proba(prepared.test.row(i));
            pred[i] = config.threshold_enabled ? threshold_decide(p[class_index(Sentiment::Positive)], config.threshold)
                                               : argmax_label(p);
        }
        RunMetadata meta{std::string(balance_technique_name(config.balance.technique)),
                         std::string(embedding_kind_name(config.embedding.kind)), model.config(), config.seed,
                         utc_timestamp()};
        return make_report(prepared.test.labels, pred, std::move(meta));
    });

    outcome.paths = ArtifactPaths{config.output};
    stage("write", [&] {
        fs::create_directories(outcome.paths.dir);
        prepared.embedding.model.save(outcome.paths.embedding());
        model.save(outcome.paths.classifier());
        write_file(outcome.paths.config(), config.snapshot());
        write_file(outcome.paths.report(), EvaluationReport::csv_header() + "\n" + outcome.report.csv_row() + "\n");
        write_file(outcome.paths.summary(), outcome.report.summary());
    });
    return outcome;
}

// --- predict / evaluate -------------------------------------------------------

SentimentPipeline SentimentPipeline::load(const fs::path& dir) {
    const ArtifactPaths paths{dir};
    SentimentPipeline p;
    p.config_ = PipelineConfig::load(paths.config());
    p.preprocessor_ = p.config_.make_preprocessor();
    p.embedding_ = EmbeddingModel::load(paths.embedding(), p.config_.embedding.n_min, p.config_.embedding.n_max);
    p.classifier_ = GbdtModel::load(paths.classifier());
    if (p.classifier_.dim() != p.embedding_.dim()) {
        throw FormatError("classifier expects " + std::to_string(p.classifier_.dim()) +
                          " features but the embedding produces " + std::to_string(p.embedding_.dim()));
    }
    return p;
}

std::vector<double> SentimentPipeline::features(std::string_view text) const {
    return embedding_.sentence_vector(preprocessor_(text));
}

ClassScores SentimentPipeline::predict_proba(std::string_view text) const {
    return classifier_.predict_proba(features(text));
}

Sentiment SentimentPipeline::predict_label(const ClassScores& probabilities, std::optional<double> threshold) const {
    if (threshold) return threshold_decide(probabilities[class_index(Sentiment::Positive)], *threshold);
    return argmax_label(probabilities);
}

std::string format_prediction(Sentiment label, const ClassScores& p, std::string_view text) {
    std::ostringstream out;
    out << to_int(label) << std::fixed << std::setprecision(6);
    for (double v : p) out << '\t' << v;
    out << '\t' << text;
    return out.str();
}

std::size_t cmd_predict(const SentimentPipeline& pipeline, std::istream& input, std::ostream& output,
                        std::optional<double> threshold) {
    if (threshold) validate_threshold(*threshold);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(input, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto p = pipeline.predict_proba(line);
        output << format_prediction(pipeline.predict_label(p, threshold), p, line) << '\n';
        ++lines;
    }
    return lines;
}

EvaluationReport cmd_evaluate(const SentimentPipeline& pipeline, const LabeledCorpus& data, const fs::path& output_dir,
                              std::optional<double> threshold) {
    if (threshold) validate_threshold(*threshold);
    std::vector<Sentiment> truth;
    std::vector<Sentiment> pred;
    for (const auto& doc : data.documents) {
        truth.push_back(doc.label);
        pred.push_back(pipeline.predict_label(pipeline.predict_proba(doc.text), threshold));
    }
    const auto& cfg = pipeline.config();
    RunMetadata meta{std::string(balance_technique_name(cfg.balance.technique)),
                     std::string(embedding_kind_name(cfg.embedding.kind)), pipeline.classifier().config(), cfg.seed,
                     utc_timestamp()};
    auto report = make_report(truth, pred, std::move(meta));
    fs::create_directories(output_dir);
    write_file(output_dir / "evaluation.csv", EvaluationReport::csv_header() + "\n" + report.csv_row() + "\n");
    write_file(output_dir / "evaluation.txt", report.summary());
    return report;
}

// --- compare ------------------------------------------------------------------

std::vector<CompareRow> cmd_compare(const PipelineConfig& config, const std::vector<std::string>& variants) {
    if (variants.empty()) throw ConfigError("--compare needs at least one variant");
    std::vector<CompareRow> rows;
    for (const auto& v : variants) {
        PipelineConfig cfg = config;
        std::string lower = v;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower == "us") lower = "under";
        if (lower == "os") lower = "over";
        if (lower == "nominal") lower = "none";

        std::string name;
        if (auto t = parse_balance_technique(lower)) {
            cfg.balance.technique = *t;
            name = display_technique(*t);
        } else if (auto k = parse_embedding_kind(lower)) {
            cfg.embedding.kind = *k;
            name = std::string(embedding_kind_name(*k));
        } else {
            throw ConfigError("unknown compare variant `" + v + "`");
        }
        cfg.output = (fs::path(config.output) / lower).string();
        auto outcome = cmd_train(cfg);
        rows.push_back({name, std::move(outcome.report)});
    }
    fs::create_directories(config.output);
    write_file(fs::path(config.output) / "compare.csv", compare_csv(rows));
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::string out = "technique,embedding,learning_rate,max_depth,n_estimators,macro_f1\n";
    for (const auto& r : rows) {
        const auto parsed = parse_balance_technique(r.report.meta.technique);
        const auto technique_name = parsed ? display_technique(*parsed) : r.report.meta.technique;
        out += technique_name + "," + r.report.meta.embedding + "," + format_double(r.report.meta.params.learning_rate) +
               "," + std::to_string(r.report.meta.params.max_depth) + "," +
               std::to_string(r.report.meta.params.n_estimators) + "," + format_double(r.report.metrics.macro_f1) + "\n";
    }
    return out;
}

// --- grid search --------------------------------------------------------------

GridSearchOutcome cmd_grid_search(const PipelineConfig& config, std::ostream& log) {
    auto prepared = prepare(config);
    GridSearchOutcome outcome;

    ParamGrid grid = config.grid;
    grid.folds = config.folds;
    GridSearchSetup setup{config.gbdt, config.balance, config.grid_seed(), config.threads};

    log << "grid search: " << grid.combinations() << " combinations x " << grid.folds << " folds\n";
    outcome.result = stage("grid-search", [&] { return grid_search(prepared.train, grid, setup); });
    log << outcome.result.fit_count << " fits\n";

    outcome.best = config;
    outcome.best.grid.params.clear();
    for (const auto& [name, value] : outcome.result.best_row().params) outcome.best.gbdt.set(name, value);
    log << "best mean macro_f1 " << format_double(outcome.result.best_row().mean_f1) << " with";
    for (const auto& [name, value] : outcome.result.best_row().params) log << " " << name << "=" << value;
    log << "\n";

    const fs::path dir(config.output);
    fs::create_directories(dir);
    outcome.results_csv = dir / "grid_results.csv";
    outcome.best_config = dir / "best_config.txt";
    write_file(outcome.results_csv,
               grid_results_csv(outcome.result, grid, std::string(balance_technique_name(config.balance.technique)),
                                std::string(embedding_kind_name(config.embedding.kind))));
    write_file(outcome.best_config, outcome.best.snapshot(false));
    return outcome;
}

// --- report -------------------------------------------------------------------

ReportOutcome cmd_report(const LabeledCorpus& data) {
    ReportOutcome out;
    out.distribution = class_histogram(data);
    constexpr int kBarWidth = 50;
    std::ostringstream text;
    text << "dataset: " << data.source_path << "  (" << data.size() << " records)\n";
    text << std::left << std::setw(10) << "label" << std::setw(10) << "class" << std::right << std::setw(8) << "count"
         << std::setw(12) << "proportion" << "\n";
    std::string csv = "label,count,proportion\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto label = class_at(c);
        const double p = out.distribution.proportions[c];
        const auto bar = static_cast<std::size_t>(std::lround(p * kBarWidth));
        text << std::left << std::setw(10) << to_int(label) << std::setw(10) << sentiment_name(label) << std::right
             << std::setw(8) << out.distribution.counts[c] << std::setw(12) << std::fixed << std::setprecision(4) << p
             << "  " << std::string(bar, '#') << "\n";
        csv += std::to_string(to_int(label)) + "," + std::to_string(out.distribution.counts[c]) + "," + format_double(p) +
               "\n";
    }
    out.text = text.str();
    out.csv = std::move(csv);
    return out;
}

} // namespace tnz
