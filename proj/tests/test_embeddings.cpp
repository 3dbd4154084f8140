#include "tnz/bpe.hpp"
#include "tnz/embeddings.hpp"
#include "tnz/error.hpp"
#include "tnz/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace tnz;

namespace {

TokenizedDocument doc(std::initializer_list<const char*> tokens) {
    return {{tokens.begin(), tokens.end()}, Sentiment::Neutral};
}

EmbedConfig small_config() {
    EmbedConfig c;
    c.dim = 16;
    c.bucket_count = 512;
    c.epochs = 3;
    c.min_count = 1;
    c.seed = 9;
    return c;
}

// Reference FNV-1a, written out independently of the library.
std::uint32_t fnv_oracle(const std::string& s) {
    std::uint32_t h = 0x811C9DC5u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x01000193u;
    }
    return h;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

std::vector<TokenizedDocument> context_corpus() {
    // "bon" and "behi" share every context; the rest is random filler.
    Rng rng(4);
    const std::vector<std::string> filler = {"el", "fi", "match", "video", "barcha", "ama", "ken", "taw", "lyoum",
                                             "service", "prix", "tounes", "hedha", "kima", "mel", "w"};
    const std::vector<std::string> contexts = {"film", "akla", "jaw", "9ahwa"};
    std::vector<TokenizedDocument> docs;
    for (int i = 0; i < 600; ++i) {
        TokenizedDocument d;
        const auto& ctx = contexts[rng.below(contexts.size())];
        d.tokens = {filler[rng.below(filler.size())], ctx, i % 2 ? "bon" : "behi", "barsha", filler[rng.below(filler.size())]};
        docs.push_back(d);
        TokenizedDocument noise;
        for (int j = 0; j < 6; ++j) noise.tokens.push_back(filler[rng.below(filler.size())]);
        docs.push_back(noise);
    }
    return docs;
}

} // namespace

TEST(Vocab, ThresholdAndOrdering) {
    const std::vector<TokenizedDocument> a{doc({"a", "a", "b"})};
    const auto v2 = build_vocab(a, 2);
    ASSERT_EQ(v2.size(), 1u);
    EXPECT_EQ(v2[0].word, "a");
    EXPECT_EQ(v2[0].count, 2u);
    EXPECT_FALSE(v2.find("b"));
    EXPECT_EQ(build_vocab(a, 1).size(), 2u);

    const std::vector<TokenizedDocument> xyz{doc({"x", "y", "z", "x", "z", "y"}), doc({"z", "x", "z", "y", "z"})};
    const auto v = build_vocab(xyz, 1);
    EXPECT_EQ(v.find("z"), 0u);
    EXPECT_EQ(v.find("x"), 1u);
    EXPECT_EQ(v.find("y"), 2u);
    EXPECT_EQ(v.total_tokens(), 11u);

    EXPECT_THROW(build_vocab(a, 3), TrainingError);
}

TEST(Ngrams, HandEnumeration) {
    const std::vector<std::string> hlib = {"<hl", "hli", "lib", "ib>", "<hli", "hlib", "lib>"};
    EXPECT_EQ(character_ngrams("hlib", 3, 4), hlib);
    EXPECT_EQ(character_ngrams("a", 3, 3), std::vector<std::string>{"<a>"});
    // n == wrapped length is skipped unless it is n_min
    EXPECT_EQ(character_ngrams("ab", 3, 4), std::vector<std::string>({"<ab", "ab>"}));
    EXPECT_EQ(character_ngrams("é7", 2, 2), std::vector<std::string>({"<é", "é7", "7>"}));
}

TEST(Ngrams, FnvBuckets) {
    EXPECT_EQ(fnv1a32(""), 0x811C9DC5u);
    EXPECT_EQ(fnv1a32("a"), 0xE40C292Cu);
    EXPECT_EQ(fnv1a32("foobar"), 0xBF9CF968u);
    const SubwordIndex index{3, 4, 1000};
    const auto ids = extract_ngrams("hlib", index);
    ASSERT_EQ(ids.size(), 7u);
    const std::vector<std::string> grams = {"<hl", "hli", "lib", "ib>", "<hli", "hlib", "lib>"};
    for (std::size_t i = 0; i < grams.size(); ++i) EXPECT_EQ(ids[i], fnv_oracle(grams[i]) % 1000);
    EXPECT_EQ(extract_ngrams("hlib", index), ids);
    for (auto id : extract_ngrams("mte3iiiii", SubwordIndex{1, 6, 7})) EXPECT_LT(id, 7u);
}

TEST(SubwordIndex, Validation) {
    EXPECT_THROW((SubwordIndex{0, 3, 10}.validate()), ConfigError);
    EXPECT_THROW((SubwordIndex{4, 3, 10}.validate()), ConfigError);
    EXPECT_THROW((SubwordIndex{3, 3, 0}.validate()), ConfigError);
    EXPECT_NO_THROW((SubwordIndex{3, 3, 1}.validate()));
}

TEST(Bpe, Examples) {
    const auto model = learn_bpe({{"aaab", 2}}, 1);
    ASSERT_EQ(model.merges().size(), 1u);
    EXPECT_EQ(model.merges()[0], (BpeMerge{"a", "a"}));

    const auto none = learn_bpe({{"hello", 5}}, 0);
    EXPECT_EQ(none.segment("hello"), std::vector<std::string>({"h", "e", "l", "l", "o"}));

    const std::vector<std::string> alphabet{"ab"};
    EXPECT_EQ(BpeModel({}, alphabet).segment("ab"), std::vector<std::string>({"a", "b"}));
    EXPECT_EQ(BpeModel({{"a", "b"}}, alphabet).segment("ab"), std::vector<std::string>({"ab"}));
}

TEST(Bpe, TieBreakAndPriority) {
    // (a,b) and (c,d) both occur 3 times: lexicographic order picks (a,b).
    const auto m = learn_bpe({{"ab", 3}, {"cd", 3}}, 1);
    EXPECT_EQ(m.merges()[0], (BpeMerge{"a", "b"}));
    // Earlier merges win over later ones when both apply.
    const std::vector<std::string> alphabet{"abc"};
    const BpeModel prio({{"b", "c"}, {"a", "b"}}, alphabet);
    EXPECT_EQ(prio.segment("abc"), std::vector<std::string>({"a", "bc"}));
    // Stops when no pair occurs twice.
    EXPECT_TRUE(learn_bpe({{"xy", 1}}, 10).merges().empty());
}

TEST(Bpe, MergeCountAndRoundTripProperty) {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<std::string, std::uint64_t>> counts;
        for (int w = 0; w < 20; ++w) {
            std::string s;
            const auto len = 1 + rng.below(8);
            for (std::size_t i = 0; i < len; ++i) s += "abc7é"[rng.below(4)];
            counts.emplace_back(s, 1 + rng.below(4));
        }
        const auto limit = rng.below(30);
        const auto model = learn_bpe(counts, limit);
        EXPECT_LE(model.merges().size(), limit);
        for (std::size_t i = 0; i < model.merges().size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) EXPECT_NE(model.merges()[i], model.merges()[j]);
        }
        for (const auto& [word, _] : counts) {
            const auto seg = model.segment(word);
            std::string joined;
            for (const auto& s : seg) {
                joined += s;
                EXPECT_TRUE(model.subunit_id(s).has_value()) << s;
            }
            EXPECT_EQ(joined, word);
            EXPECT_EQ(model.segment(word), seg);
        }
    }
    // A corpus rich enough for the limit produces exactly that many merges.
    EXPECT_EQ(learn_bpe({{"abcdefgh", 10}}, 5).merges().size(), 5u);
}

TEST(SkipgramKernel, GradientMatchesFiniteDifferences) {
    Rng rng(17);
    const double h = 1e-4;
    for (int point = 0; point < 20; ++point) {
        const std::size_t dim = 6;
        DenseMatrix<double> input(8, dim);
        DenseMatrix<double> output(5, dim);
        for (auto& v : input.values) v = rng.uniform(-0.5, 0.5);
        for (auto& v : output.values) v = rng.uniform(-0.5, 0.5);
        const std::vector<std::uint32_t> rows = {1, 4, 6};
        const std::vector<std::uint32_t> targets = {0, 2, 3, 4};

        // One step with lr = 1 moves every parameter by minus its gradient.
        auto in_after = input;
        auto out_after = output;
        std::vector<double> hidden(dim), grad(dim);
        skipgram_step<double>(in_after, out_after, rows, targets, 1.0, hidden, grad);

        auto check = [&](DenseMatrix<double>& m, const DenseMatrix<double>& before, const DenseMatrix<double>& after) {
            for (std::size_t i = 0; i < m.values.size(); ++i) {
                const double saved = m.values[i];
                m.values[i] = saved + h;
                const double up = skipgram_loss(input, output, rows, targets);
                m.values[i] = saved - h;
                const double down = skipgram_loss(input, output, rows, targets);
                m.values[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = before.values[i] - after.values[i];
                const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
                EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-5) << "point " << point << " index " << i;
            }
        };
        check(input, input, in_after);
        check(output, output, out_after);
    }
}

TEST(SkipgramKernel, SharedUpdateScalesInputStep) {
    Rng rng(18);
    DenseMatrix<double> input(6, 4), output(3, 4);
    for (auto& v : input.values) v = rng.uniform(-0.5, 0.5);
    for (auto& v : output.values) v = rng.uniform(-0.5, 0.5);
    const std::vector<std::uint32_t> rows = {0, 2, 5};
    const std::vector<std::uint32_t> targets = {1, 0, 2};
    std::vector<double> hidden(4), grad(4);
    auto in_exact = input, out_exact = output, in_shared = input, out_shared = output;
    skipgram_step<double>(in_exact, out_exact, rows, targets, 0.1, hidden, grad, InputUpdate::Exact);
    skipgram_step<double>(in_shared, out_shared, rows, targets, 0.1, hidden, grad, InputUpdate::Shared);
    EXPECT_EQ(out_exact.values, out_shared.values);
    for (std::size_t i = 0; i < input.values.size(); ++i) {
        EXPECT_NEAR(in_shared.values[i] - input.values[i], 3.0 * (in_exact.values[i] - input.values[i]), 1e-14);
    }
}

TEST(Skipgram, ZeroEpochsIsInitialization) {
    auto c = small_config();
    c.epochs = 0;
    const std::vector<TokenizedDocument> corpus{doc({"a", "b", "c"})};
    const auto r = train_skipgram(corpus, c);
    const auto& m = r.model;
    EXPECT_EQ(m.input_vectors().rows, m.vocab().size() + c.bucket_count);
    EXPECT_EQ(m.output_vectors().rows, m.vocab().size());
    const float bound = 1.0f / static_cast<float>(c.dim);
    for (float v : m.input_vectors().values) {
        EXPECT_GE(v, -bound);
        EXPECT_LE(v, bound);
    }
    for (float v : m.output_vectors().values) EXPECT_EQ(v, 0.0f);
    EXPECT_TRUE(r.epoch_loss.empty());
}

TEST(Skipgram, LossDecreasesOnTwoWordCorpus) {
    auto c = small_config();
    c.window = 1;
    c.epochs = 30;
    c.learning_rate = 0.1;
    std::vector<TokenizedDocument> corpus(50, doc({"a", "b"}));
    const auto r = train_skipgram(corpus, c);
    ASSERT_EQ(r.epoch_loss.size(), 30u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
    for (double l : r.epoch_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Skipgram, SharedContextsGiveSimilarVectors) {
    auto c = small_config();
    c.dim = 32;
    c.epochs = 10;
    const auto corpus = context_corpus();
    const auto model = train_skipgram(corpus, c).model;
    const double target = cosine(model.word_vector("bon"), model.word_vector("behi"));

    Rng rng(8);
    const auto& entries = model.vocab().entries();
    double sum = 0;
    for (int i = 0; i < 100; ++i) {
        const auto& a = entries[rng.below(entries.size())].word;
        const auto& b = entries[rng.below(entries.size())].word;
        sum += cosine(model.word_vector(a), model.word_vector(b));
    }
    EXPECT_GT(target, sum / 100);
}

TEST(Skipgram, DeterministicSingleWorker) {
    const auto corpus = context_corpus();
    const auto a = train_skipgram(corpus, small_config());
    const auto b = train_skipgram(corpus, small_config());
    EXPECT_EQ(a.model.serialize(), b.model.serialize());
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    auto other = small_config();
    other.seed = 10;
    EXPECT_NE(train_skipgram(corpus, other).model.serialize(), a.model.serialize());
}

TEST(Skipgram, MultiWorkerProducesFiniteModel) {
    const auto corpus = context_corpus();
    const auto r = train_skipgram(corpus, small_config(), 4);
    for (float v : r.model.input_vectors().values) ASSERT_TRUE(std::isfinite(v));
    EXPECT_EQ(r.model.vocab(), train_skipgram(corpus, small_config()).model.vocab());
}

TEST(Skipgram, RejectsBadInput) {
    auto c = small_config();
    c.min_count = 5;
    EXPECT_THROW(train_skipgram(std::vector<TokenizedDocument>{doc({"a"})}, c), TrainingError);
    c = small_config();
    c.learning_rate = 1e300;
    EXPECT_THROW(train_skipgram(context_corpus(), c), TrainingError);
    c = small_config();
    c.dim = 0;
    EXPECT_THROW(train_skipgram(context_corpus(), c), ConfigError);
}

TEST(WordVector, MeanOfRowsAndOov) {
    const auto model = train_skipgram(context_corpus(), small_config()).model;
    const auto rows = model.input_rows("barcha");
    ASSERT_EQ(rows.front(), *model.vocab().find("barcha"));
    const auto v = model.word_vector("barcha");
    const auto sub = extract_ngrams("barcha", model.subwords());
    ASSERT_EQ(rows.size(), sub.size() + 1);

    // Removing the word's own row leaves the OOV-style mean of its n-grams.
    std::vector<double> sub_mean(model.dim(), 0.0);
    for (auto b : sub) {
        for (std::size_t d = 0; d < model.dim(); ++d) sub_mean[d] += model.input_vectors()(model.vocab().size() + b, d);
    }
    for (auto& x : sub_mean) x /= static_cast<double>(sub.size());
    const auto& own = model.input_vectors();
    for (std::size_t d = 0; d < model.dim(); ++d) {
        const double reconstructed = (v[d] * static_cast<double>(rows.size()) - own(rows.front(), d)) / sub.size();
        EXPECT_NEAR(reconstructed, sub_mean[d], 1e-9);
    }

    const auto oov = model.word_vector("zzqqxx");
    EXPECT_EQ(oov.size(), model.dim());
    for (double x : oov) EXPECT_TRUE(std::isfinite(x));
    EXPECT_EQ(model.word_vector("barcha"), v);
}

TEST(SentenceVector, MeanProperties) {
    const auto model = train_skipgram(context_corpus(), small_config()).model;
    const std::vector<std::string> ww{"bon", "bon"};
    EXPECT_EQ(model.sentence_vector(ww), model.word_vector("bon"));
    const auto zero = model.sentence_vector({});
    EXPECT_EQ(zero, std::vector<double>(model.dim(), 0.0));

    const std::vector<std::string> s1{"el", "film", "behi", "xyzzy"};
    const std::vector<std::string> s2{"xyzzy", "behi", "el", "film"};
    const auto a = model.sentence_vector(s1);
    const auto b = model.sentence_vector(s2);
    for (std::size_t d = 0; d < a.size(); ++d) EXPECT_NEAR(a[d], b[d], 1e-12);
}

TEST(BpeEmbedding, SubunitRowsReplaceNgrams) {
    auto c = small_config();
    c.kind = EmbeddingKind::Bpe;
    c.bpe_merges = 40;
    const auto model = train_skipgram(context_corpus(), c).model;
    EXPECT_EQ(model.kind(), EmbeddingKind::Bpe);
    EXPECT_EQ(model.input_vectors().rows, model.vocab().size() + model.bpe().subunits().size());
    EXPECT_LE(model.bpe().merges().size(), 40u);
    const auto rows = model.input_rows("behi");
    EXPECT_EQ(rows.size(), 1 + model.bpe().segment("behi").size());
    EXPECT_EQ(model.word_vector("qqq").size(), c.dim);
}

TEST(ModelFile, RoundTripIsByteIdentical) {
    for (auto kind : {EmbeddingKind::FastText, EmbeddingKind::Bpe}) {
        auto c = small_config();
        c.kind = kind;
        const auto model = train_skipgram(context_corpus(), c).model;
        const auto bytes = model.serialize();
        ASSERT_EQ(bytes.substr(0, 8), "TNZEMB01");
        const auto back = EmbeddingModel::deserialize(bytes, c.n_min, c.n_max);
        EXPECT_EQ(back, model);
        EXPECT_EQ(back.serialize(), bytes);

        const auto path = std::filesystem::temp_directory_path() / "tnz_emb_roundtrip.bin";
        model.save(path);
        EXPECT_EQ(EmbeddingModel::load(path, c.n_min, c.n_max).serialize(), bytes);
    }
}

TEST(ModelFile, HeaderLayout) {
    auto c = small_config();
    c.dim = 4;
    c.bucket_count = 8;
    c.epochs = 0;
    const auto model = train_skipgram(std::vector<TokenizedDocument>{doc({"ab", "ab", "c"})}, c).model;
    const auto bytes = model.serialize();
    auto u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
        return v;
    };
    EXPECT_EQ(u32(8), 4u);  // dim
    EXPECT_EQ(u32(12), 2u); // V
    EXPECT_EQ(u32(16), 8u); // buckets
    EXPECT_EQ(bytes[20], 0); // flags
    EXPECT_EQ(u32(21), 2u); // "ab"
    EXPECT_EQ(bytes.substr(25, 2), "ab");
    // header + vocab + (V + buckets) * dim + V * dim floats
    const std::size_t vocab_bytes = (4 + 2 + 8) + (4 + 1 + 8);
    EXPECT_EQ(bytes.size(), 21 + vocab_bytes + 4 * (10 * 4 + 2 * 4));
}

TEST(ModelFile, CorruptInputsRejected) {
    auto c = small_config();
    c.epochs = 0;
    const auto bytes = train_skipgram(std::vector<TokenizedDocument>{doc({"a", "b"})}, c).model.serialize();
    auto wrong = bytes;
    wrong[7] = '2';
    try {
        EmbeddingModel::deserialize(wrong, 3, 6);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("TNZEMB01"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("TNZEMB02"), std::string::npos);
    }
    EXPECT_THROW(EmbeddingModel::deserialize(bytes.substr(0, bytes.size() - 3), 3, 6), FormatError);
    EXPECT_THROW(EmbeddingModel::deserialize(bytes + "x", 3, 6), FormatError);
}
