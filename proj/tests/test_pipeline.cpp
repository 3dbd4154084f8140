#include "synthetic_corpus.hpp"
#include "tnz/error.hpp"
#include "tnz/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace tnz;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "tnz_pipeline_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

PipelineConfig small_config(const fs::path& dir, const fs::path& dataset) {
    PipelineConfig c;
    c.dataset = dataset.string();
    c.output = (dir / "out").string();
    c.seed = 5;
    c.embedding.dim = 16;
    c.embedding.bucket_count = 2048;
    c.embedding.epochs = 10;
    c.gbdt.n_estimators = 60;
    // the default hessian floor cannot isolate a class of a few dozen rows
    c.gbdt.min_child_weight = 1.0;
    return c;
}

fs::path small_corpus(const fs::path& dir, std::size_t pos = 300, std::size_t neg = 150, std::size_t neu = 100) {
    synth::SyntheticCorpusSpec spec;
    spec.positive = pos;
    spec.negative = neg;
    spec.neutral = neu;
    const auto path = dir / "data.tsv";
    synth::write_synthetic_corpus(spec, path);
    return path;
}

struct RunResult {
    int code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(TNZ_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

} // namespace

TEST(Config, ParseSnapshotRoundTrip) {
    const auto c = PipelineConfig::parse(R"(# comment
dataset = data/tunizi.tsv
seed = 42
embedding.type = bpe
embedding.dim = 50
balance.technique = adasyn
balance.beta = 0.5
gbdt.num_leaves = 31
gbdt.learning_rate = 0.05
threshold.enabled = true
threshold.t = 0.8
split.k = 4
grid.learning_rate = 0.05, 0.1
grid.max_depth = 4,8
)");
    EXPECT_EQ(c.dataset, "data/tunizi.tsv");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.embedding.kind, EmbeddingKind::Bpe);
    EXPECT_EQ(c.embedding.dim, 50u);
    EXPECT_EQ(c.balance.technique, BalanceTechnique::Adasyn);
    EXPECT_EQ(c.balance.beta, 0.5);
    EXPECT_EQ(c.gbdt.num_leaves, 31u);
    EXPECT_TRUE(c.threshold_enabled);
    EXPECT_EQ(c.folds, 4u);
    EXPECT_EQ(c.grid.folds, 4u);
    ASSERT_EQ(c.grid.params.size(), 2u);
    EXPECT_EQ(c.grid.params[1].second, (std::vector<std::string>{"4", "8"}));

    const auto snap = c.snapshot();
    EXPECT_EQ(PipelineConfig::parse(snap).snapshot(), snap);
    EXPECT_EQ(PipelineConfig{}.snapshot(), PipelineConfig::parse(PipelineConfig{}.snapshot()).snapshot());
}

TEST(Config, Errors) {
    EXPECT_THROW(PipelineConfig::parse("nonsense.key = 1\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("seed = abc\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("just words\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("embedding.type = glove\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("gbdt.seed = 3\n"), ConfigError);
    try {
        PipelineConfig::parse("seed = 1\n\nthreshold.enabled = maybe\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    PipelineConfig c;
    c.dataset = "/definitely/missing.tsv";
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/definitely/missing.tsv"), std::string::npos);
    }
    c = PipelineConfig{};
    c.threshold_enabled = true;
    c.threshold = 0.4;
    EXPECT_THROW(c.validate(false), ConfigError);
    c = PipelineConfig{};
    c.seed = 1;
    EXPECT_NE(c.split_seed(), c.embedding_seed());
    EXPECT_NE(c.balance_seed(), c.gbdt_seed());
}

TEST(Train, WritesArtifactsAndSeparates) {
    const auto dir = scratch("train");
    const auto cfg = small_config(dir, small_corpus(dir));
    const auto out = cmd_train(cfg);
    for (const auto& p : {out.paths.embedding(), out.paths.classifier(), out.paths.report(), out.paths.summary(),
                          out.paths.config()}) {
        EXPECT_TRUE(fs::exists(p)) << p;
    }
    EXPECT_EQ(slurp(out.paths.embedding()).substr(0, 8), "TNZEMB01");
    EXPECT_EQ(slurp(out.paths.classifier()).substr(0, 8), "TNZGBM01");
    EXPECT_EQ(slurp(out.paths.config()), cfg.snapshot());
    EXPECT_GE(out.report.metrics.macro_f1, 0.9);
    EXPECT_EQ(out.split.train.size() + out.split.test.size(), 550u);
    EXPECT_EQ(out.report.confusion.total(), out.split.test.size());
}

TEST(Train, DeterministicArtifacts) {
    const auto dir = scratch("determinism");
    const auto data = small_corpus(dir);
    auto a = small_config(dir, data);
    a.output = (dir / "a").string();
    auto b = a;
    b.output = (dir / "b").string();
    b.balance.technique = a.balance.technique = BalanceTechnique::Smote;
    const auto ra = cmd_train(a);
    const auto rb = cmd_train(b);
    EXPECT_EQ(slurp(ra.paths.embedding()), slurp(rb.paths.embedding()));
    EXPECT_EQ(slurp(ra.paths.classifier()), slurp(rb.paths.classifier()));

    const auto loaded = SentimentPipeline::load(ra.paths.dir);
    loaded.embedding().save(dir / "emb2.bin");
    loaded.classifier().save(dir / "gbdt2.txt");
    EXPECT_EQ(slurp(dir / "emb2.bin"), slurp(ra.paths.embedding()));
    EXPECT_EQ(slurp(dir / "gbdt2.txt"), slurp(ra.paths.classifier()));
}

TEST(Train, EmbeddingNeverSeesTestText) {
    const auto dir = scratch("leak");
    synth::SyntheticCorpusSpec spec;
    spec.positive = 60;
    spec.negative = 30;
    spec.neutral = 20;
    auto corpus = synth::make_synthetic_corpus(spec);
    // every document carries a word seen nowhere else
    for (std::size_t i = 0; i < corpus.size(); ++i) corpus.documents[i].text += " uniq" + std::to_string(i);
    synth::write_tsv(corpus, dir / "data.tsv");

    auto cfg = small_config(dir, dir / "data.tsv");
    cfg.embedding.min_count = 1;
    cfg.balance.technique = BalanceTechnique::Adasyn;
    const auto out = cmd_train(cfg);
    const auto model = SentimentPipeline::load(out.paths.dir);
    const auto& vocab = model.embedding().vocab();
    for (auto i : out.split.test) EXPECT_FALSE(vocab.find("uniq" + std::to_string(i))) << i;
    for (auto i : out.split.train) EXPECT_TRUE(vocab.find("uniq" + std::to_string(i))) << i;

    const std::set<std::uint32_t> train(out.split.train.begin(), out.split.train.end());
    EXPECT_EQ(out.embedding_rows, out.split.train);
    EXPECT_FALSE(out.balanced_sources.empty());
    for (auto s : out.balanced_sources) EXPECT_TRUE(train.contains(s)) << s;
}

TEST(Predict, LinesProbabilitiesAndThreshold) {
    const auto dir = scratch("predict");
    const auto cfg = small_config(dir, small_corpus(dir));
    cmd_train(cfg);
    const auto pipeline = SentimentPipeline::load(cfg.output);

    std::istringstream in("behi barcha\n\nkhayeb mochkla\nchnowa 9adech\n");
    std::ostringstream out;
    EXPECT_EQ(cmd_predict(pipeline, in, out, std::nullopt), 4u);
    std::istringstream lines(out.str());
    std::string line;
    std::vector<std::string> labels;
    while (std::getline(lines, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (line.back() == '\t') fields.emplace_back();
        ASSERT_EQ(fields.size(), 5u) << line;
        const double sum = std::stod(fields[1]) + std::stod(fields[2]) + std::stod(fields[3]);
        EXPECT_NEAR(sum, 1.0, 2e-6);
        labels.push_back(fields[0]);
    }
    ASSERT_EQ(labels.size(), 4u);
    EXPECT_EQ(labels[0], "1");
    EXPECT_EQ(labels[2], "-1");

    EXPECT_EQ(pipeline.features("").size(), cfg.embedding.dim);
    for (double v : pipeline.features("")) EXPECT_EQ(v, 0.0);

    // p(-1) = 0.3, p(0) = 0.2, p(1) = 0.5
    EXPECT_EQ(pipeline.predict_label({0.3, 0.2, 0.5}, std::nullopt), Sentiment::Positive);
    EXPECT_EQ(pipeline.predict_label({0.05, 0.05, 0.9}, 0.7), Sentiment::Positive);
    EXPECT_EQ(pipeline.predict_label({0.4, 0.4, 0.2}, 0.7), Sentiment::Negative);
    EXPECT_EQ(pipeline.predict_label({0.1, 0.4, 0.5}, 0.7), Sentiment::Neutral);
    EXPECT_EQ(format_prediction(Sentiment::Positive, {0.3, 0.2, 0.5}, "x"), "1\t0.300000\t0.200000\t0.500000\tx");
}

TEST(Evaluate, MemorizesTrainingSetAndIsConsistent) {
    const auto dir = scratch("evaluate");
    synth::SyntheticCorpusSpec spec;
    spec.positive = 60;
    spec.negative = 40;
    spec.neutral = 30;
    spec.cross_noise = 0.0;
    spec.decorate = false;
    const auto corpus = synth::write_synthetic_corpus(spec, dir / "data.tsv");
    auto cfg = small_config(dir, dir / "data.tsv");
    cfg.gbdt.n_estimators = 200;
    cfg.gbdt.min_child_weight = 0.0;
    cfg.gbdt.subsample = 1.0;
    const auto trained = cmd_train(cfg);
    const auto pipeline = SentimentPipeline::load(cfg.output);

    LabeledCorpus train_docs;
    for (auto i : trained.split.train) train_docs.documents.push_back(corpus.documents[i]);
    const auto report = cmd_evaluate(pipeline, train_docs, dir / "eval", std::nullopt);
    EXPECT_EQ(report.metrics.macro_f1, 1.0);
    EXPECT_TRUE(fs::exists(dir / "eval" / "evaluation.csv"));
    EXPECT_TRUE(fs::exists(dir / "eval" / "evaluation.txt"));

    const auto full = cmd_evaluate(pipeline, corpus, dir / "eval2", std::nullopt);
    std::vector<Sentiment> t, p;
    for (auto a : kClassOrder) {
        for (auto b : kClassOrder) {
            for (std::size_t i = 0; i < full.confusion.at(a, b); ++i) {
                t.push_back(a);
                p.push_back(b);
            }
        }
    }
    EXPECT_EQ(macro_f1(t, p), full.metrics.macro_f1);
}

TEST(Compare, BalancingTableShape) {
    const auto dir = scratch("compare");
    auto cfg = small_config(dir, small_corpus(dir));
    const auto rows = cmd_compare(cfg, {"US", "OS", "ADASYN"});
    ASSERT_EQ(rows.size(), 3u);
    const auto csv = slurp(fs::path(cfg.output) / "compare.csv");
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "technique,embedding,learning_rate,max_depth,n_estimators,macro_f1");
    EXPECT_EQ(lines[1].rfind("US,fasttext,0.1,8,60,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("OS,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("ADASYN,", 0), 0u);
    EXPECT_THROW(cmd_compare(cfg, {"GAN"}), ConfigError);
}

TEST(GridSearchCommand, SingleComboAndTable) {
    const auto dir = scratch("grid");
    auto cfg = small_config(dir, small_corpus(dir));
    cfg.set("grid.max_depth", "3");
    cfg.gbdt.n_estimators = 10;
    std::ostringstream log;
    const auto out = cmd_grid_search(cfg, log);
    EXPECT_NE(log.str().find("5 fits"), std::string::npos) << log.str();
    EXPECT_EQ(out.best.gbdt.max_depth, 3);
    const auto best = PipelineConfig::load(out.best_config);
    EXPECT_EQ(best.gbdt.max_depth, 3);
    EXPECT_TRUE(best.grid.params.empty());

    cfg.set("grid.learning_rate", "0.1,0.2,0.3");
    std::ostringstream log2;
    const auto wide = cmd_grid_search(cfg, log2);
    EXPECT_NE(log2.str().find("15 fits"), std::string::npos);
    const auto csv = slurp(wide.results_csv);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3);
}

TEST(ReportCommand, BarsAndCsv) {
    const auto balanced = parse_dataset("1\ta\n0\tb\n-1\tc\n1\td\n0\te\n-1\tf\n");
    const auto r = cmd_report(balanced);
    std::vector<std::size_t> bars;
    std::istringstream in(r.text);
    std::string line;
    while (std::getline(in, line)) {
        const auto n = static_cast<std::size_t>(std::count(line.begin(), line.end(), '#'));
        if (n) bars.push_back(n);
    }
    ASSERT_EQ(bars.size(), 3u);
    EXPECT_EQ(bars[0], bars[1]);
    EXPECT_EQ(bars[1], bars[2]);

    const auto skewed = parse_dataset("1\ta\n1\tb\n1\tc\n1\td\n-1\te\n-1\tf\n0\tg\n");
    const auto s = cmd_report(skewed);
    std::istringstream csv(s.csv);
    std::getline(csv, line);
    EXPECT_EQ(line, "label,count,proportion");
    double sum = 0;
    std::map<std::string, std::size_t> count;
    while (std::getline(csv, line)) {
        const auto a = line.find(','), b = line.rfind(',');
        count[line.substr(0, a)] = std::stoul(line.substr(a + 1, b - a - 1));
        sum += std::stod(line.substr(b + 1));
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_GT(count["1"], count["-1"]);
    EXPECT_GT(count["-1"], count["0"]);
    EXPECT_THROW(cmd_report(LabeledCorpus{}), EmptyDatasetError);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    const auto missing = (dir / "nope.tsv").string();
    auto r = run_cli("--output " + (dir / "o").string() + " train --dataset " + missing);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;

    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("train --no-such-flag").code, 2);
    EXPECT_EQ(run_cli("--help").code, 0);

    const auto data = small_corpus(dir, 40, 20, 20);
    r = run_cli("report " + data.string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("label,count,proportion"), std::string::npos);

    const auto out = (dir / "model").string();
    r = run_cli("--output " + out + " --seed 3 train --dataset " + data.string() +
                " --set embedding.dim=8 --set embedding.buckets=256 --set gbdt.n_estimators=20 --balance over");
    EXPECT_EQ(r.code, 0) << r.output;
    r = run_cli("predict --model " + out + " --text 'behi barcha'");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);
    EXPECT_EQ(run_cli("predict --model " + out + " --text x --threshold 0.3").code, 2);

    // corrupt classifier file: runtime failure naming the expected header
    std::ofstream(fs::path(out) / "gbdt.txt") << "TNZGBM00\n";
    r = run_cli("predict --model " + out + " --text x");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("TNZGBM01"), std::string::npos) << r.output;

    // a stage failure names the stage
    std::ofstream(dir / "one_class.tsv") << "1\tbehi barcha\n1\tbehi yesser\n1\tbarcha behi\n1\tyesser behi\n";
    r = run_cli("--output " + (dir / "x").string() + " train --dataset " + (dir / "one_class.tsv").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("gbdt:"), std::string::npos) << r.output;
}
