// tnz: dialect sentiment pipeline command-line tool.
//
//   tnz report DATASET
//   tnz train --dataset FILE [--balance over] [--embedding bpe]
//   tnz predict --model DIR (--input FILE | --text STR) [--threshold t]
//   tnz evaluate --model DIR --dataset FILE
//   tnz evaluate --dataset FILE --compare US,OS,ADASYN
//   tnz grid-search --dataset FILE --grid learning_rate=0.05,0.1 ...
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "tnz/error.hpp"
#include "tnz/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output;

    std::optional<std::string> dataset;
    std::optional<std::string> embedding;
    std::optional<std::string> balance;
    std::optional<std::size_t> k_neighbors;
    std::optional<double> beta;
    std::optional<std::string> stopwords;
    std::optional<std::string> stem_rules;
    bool stem = false;
    std::vector<std::string> sets;

    std::string model_dir;
    std::string input;
    std::optional<std::string> text;
    std::optional<double> threshold;
    std::vector<std::string> compare;
    std::vector<std::string> grid;
    std::string csv_out;
};

tnz::PipelineConfig build_config(const Options& o) {
    auto config = o.config_file.empty() ? tnz::PipelineConfig{} : tnz::PipelineConfig::load(o.config_file);
    if (o.seed) config.seed = *o.seed;
    if (o.threads) config.threads = *o.threads;
    if (o.output) config.output = *o.output;
    if (o.dataset) config.dataset = *o.dataset;
    if (o.embedding) config.set("embedding.type", *o.embedding);
    if (o.balance) config.set("balance.technique", *o.balance);
    if (o.k_neighbors) config.balance.k_neighbors = *o.k_neighbors;
    if (o.beta) config.balance.beta = *o.beta;
    if (o.stopwords) config.stopwords_file = *o.stopwords;
    if (o.stem_rules) config.stem_rules_file = *o.stem_rules;
    if (o.stem) config.stem = true;
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw tnz::ConfigError("--set expects key=value, got `" + kv + "`");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& kv : o.grid) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw tnz::ConfigError("--grid expects name=v1,v2,..., got `" + kv + "`");
        config.set("grid." + kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.grid.folds = config.folds;
    return config;
}

std::optional<double> effective_threshold(const Options& o, const tnz::PipelineConfig& trained) {
    if (o.threshold) return o.threshold;
    if (trained.threshold_enabled) return trained.threshold;
    return std::nullopt;
}

std::string model_dir(const Options& o) {
    if (!o.model_dir.empty()) return o.model_dir;
    if (o.output) return *o.output;
    return tnz::PipelineConfig{}.output;
}

int run_report(const Options& o) {
    const auto config = build_config(o);
    if (config.dataset.empty()) throw tnz::ConfigError("no dataset given");
    const auto corpus = tnz::load_dataset(config.dataset);
    const auto report = tnz::cmd_report(corpus);
    std::cout << report.text;
    if (!o.csv_out.empty()) {
        std::ofstream out(o.csv_out);
        if (!out) throw tnz::Error("cannot write `" + o.csv_out + "`");
        out << report.csv;
    } else {
        std::cout << "\n" << report.csv;
    }
    return 0;
}

int run_train(const Options& o) {
    const auto config = build_config(o);
    const auto outcome = tnz::cmd_train(config);
    std::cout << outcome.report.summary();
    std::cout << "artifacts written to " << outcome.paths.dir.string() << "\n";
    return 0;
}

int run_predict(const Options& o) {
    const auto pipeline = tnz::SentimentPipeline::load(model_dir(o));
    const auto threshold = effective_threshold(o, pipeline.config());
    if (o.text) {
        std::istringstream in(*o.text);
        tnz::cmd_predict(pipeline, in, std::cout, threshold);
        return 0;
    }
    if (o.input.empty() || o.input == "-") {
        tnz::cmd_predict(pipeline, std::cin, std::cout, threshold);
        return 0;
    }
    std::ifstream in(o.input);
    if (!in) throw tnz::ConfigError("input file `" + o.input + "` does not exist");
    tnz::cmd_predict(pipeline, in, std::cout, threshold);
    return 0;
}

int run_evaluate(const Options& o) {
    if (!o.compare.empty()) {
        const auto config = build_config(o);
        const auto rows = tnz::cmd_compare(config, o.compare);
        std::cout << tnz::compare_csv(rows);
        return 0;
    }
    const auto dir = model_dir(o);
    const auto pipeline = tnz::SentimentPipeline::load(dir);
    const auto dataset = o.dataset ? *o.dataset : pipeline.config().dataset;
    if (dataset.empty()) throw tnz::ConfigError("no dataset given");
    if (!std::filesystem::exists(dataset)) throw tnz::ConfigError("dataset `" + dataset + "` does not exist");
    const auto corpus = tnz::load_dataset(dataset);
    const auto report = tnz::cmd_evaluate(pipeline, corpus, dir, effective_threshold(o, pipeline.config()));
    std::cout << report.summary();
    return 0;
}

int run_grid_search(const Options& o) {
    const auto config = build_config(o);
    const auto outcome = tnz::cmd_grid_search(config, std::cout);
    std::cout << "results: " << outcome.results_csv.string() << "\n"
              << "best config: " << outcome.best_config.string() << "\n";
    return 0;
}

void add_pipeline_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--dataset,-d", o.dataset, "Labeled dataset (label<TAB>text per line)");
    cmd->add_option("--embedding", o.embedding, "Embedding type: fasttext or bpe");
    cmd->add_option("--balance", o.balance, "Balancing: none, under, over, smote, adasyn");
    cmd->add_option("--k-neighbors", o.k_neighbors, "Neighbors for SMOTE/ADASYN");
    cmd->add_option("--beta", o.beta, "ADASYN balance level");
    cmd->add_option("--stopwords", o.stopwords, "Stopword list, one word per line");
    cmd->add_option("--stem-rules", o.stem_rules, "Suffix list for the stemmer");
    cmd->add_flag("--stem", o.stem, "Enable suffix stemming");
    cmd->add_option("--set", o.sets, "Override any config key (key=value)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Arabizi dialect sentiment pipeline"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config,-c", o.config_file, "Config file (key = value)");
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--threads", o.threads, "Worker threads (1 is deterministic)");
    app.add_option("--output,-o", o.output, "Output directory");

    auto* report = app.add_subcommand("report", "Class distribution of a dataset");
    report->add_option("dataset", o.dataset, "Labeled dataset")->required();
    report->add_option("--csv", o.csv_out, "Write label,count,proportion CSV here");

    auto* train = app.add_subcommand("train", "Train embeddings and classifier, evaluate on held-out split");
    add_pipeline_options(train, o);

    auto* predict = app.add_subcommand("predict", "Score text lines with a trained model");
    predict->add_option("--model,-m", o.model_dir, "Artifact directory");
    auto* input = predict->add_option("--input,-i", o.input, "Text file, one document per line (- for stdin)");
    predict->add_option("--text", o.text, "Score a single text")->excludes(input);
    predict->add_option("--threshold", o.threshold, "Positive-vs-rest threshold t in (0.5, 1]");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model on a labeled dataset");
    evaluate->add_option("--model,-m", o.model_dir, "Artifact directory");
    evaluate->add_option("--threshold", o.threshold, "Positive-vs-rest threshold t in (0.5, 1]");
    evaluate->add_option("--compare", o.compare, "Train and compare variants (US, OS, SMOTE, ADASYN, nominal, fasttext, bpe)")
        ->delimiter(',');
    add_pipeline_options(evaluate, o);

    auto* grid = app.add_subcommand("grid-search", "Cross-validated hyperparameter search");
    grid->add_option("--grid", o.grid, "Parameter values, e.g. learning_rate=0.05,0.1 (repeatable)");
    add_pipeline_options(grid, o);

    for (auto* sub : {report, train, predict, evaluate, grid}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*report) return run_report(o);
        if (*train) return run_train(o);
        if (*predict) return run_predict(o);
        if (*evaluate) return run_evaluate(o);
        if (*grid) return run_grid_search(o);
    } catch (const tnz::ConfigError& e) {
        std::cerr << "tnz: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "tnz: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
