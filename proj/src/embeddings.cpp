#include "tnz/embeddings.hpp"

#include "byte_io.hpp"
#include "tnz/error.hpp"
#include "tnz/random.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tnz {

std::string_view embedding_kind_name(EmbeddingKind kind) {
    return kind == EmbeddingKind::Bpe ? "bpe" : "fasttext";
}

std::optional<EmbeddingKind> parse_embedding_kind(std::string_view name) {
    if (name == "fasttext") return EmbeddingKind::FastText;
    if (name == "bpe") return EmbeddingKind::Bpe;
    return std::nullopt;
}

void EmbedConfig::validate() const {
    if (dim == 0 || window == 0 || negatives == 0 || min_count == 0) {
        throw ConfigError("embedding dim, window, negatives and min_count must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("embedding learning rate must be positive");
    }
    SubwordIndex{n_min, n_max, bucket_count}.validate();
}

void SubwordIndex::validate() const {
    if (n_min < 1 || n_min > n_max) {
        throw ConfigError("n-gram bounds must satisfy 1 <= n_min <= n_max");
    }
    if (bucket_count < 1) {
        throw ConfigError("bucket_count must be >= 1");
    }
}

Vocabulary::Vocabulary(std::vector<Entry> entries, std::uint32_t min_count)
    : entries_(std::move(entries)), min_count_(min_count) {
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!index_.emplace(entries_[i].word, static_cast<std::uint32_t>(i)).second) {
            throw FormatError("duplicate vocabulary word `" + entries_[i].word + "`");
        }
        total_tokens_ += entries_[i].count;
    }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Vocabulary build_vocab(std::span<const TokenizedDocument> corpus, std::uint32_t min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& t : doc.tokens) {
            ++counts[t];
        }
    }
    std::vector<Vocabulary::Entry> entries;
    for (auto& [word, count] : counts) {
        if (count >= min_count) {
            entries.push_back({word, count});
        }
    }
    if (entries.empty()) {
        throw TrainingError("empty vocabulary: no token reaches min_count " + std::to_string(min_count));
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.count > b.count; });
    return Vocabulary(std::move(entries), min_count);
}

std::uint32_t fnv1a32(std::string_view bytes) {
    std::uint32_t h = 2166136261U;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 16777619U;
    }
    return h;
}

std::vector<std::string> character_ngrams(std::string_view word, std::uint32_t n_min, std::uint32_t n_max) {
    std::vector<char32_t> wrapped{U'<'};
    const auto cps = decode_utf8(word);
    wrapped.insert(wrapped.end(), cps.begin(), cps.end());
    wrapped.push_back(U'>');
    const std::size_t length = wrapped.size();

    std::vector<std::string> grams;
    for (std::size_t n = n_min; n <= n_max && n <= length; ++n) {
        if (n == length && n != n_min) {
            continue;
        }
        for (std::size_t start = 0; start + n <= length; ++start) {
            grams.push_back(encode_utf8(std::span(wrapped).subspan(start, n)));
        }
    }
    return grams;
}

std::vector<std::uint32_t> extract_ngrams(std::string_view word, const SubwordIndex& index) {
    std::vector<std::uint32_t> ids;
    for (const auto& g : character_ngrams(word, index.n_min, index.n_max)) {
        ids.push_back(fnv1a32(g) % index.bucket_count);
    }
    return ids;
}

EmbeddingModel::EmbeddingModel(EmbeddingKind kind, std::uint32_t dim, Vocabulary vocab, SubwordIndex subwords,
                               BpeModel bpe, DenseMatrix<float> input, DenseMatrix<float> output)
    : kind_(kind), dim_(dim), vocab_(std::move(vocab)), subwords_(subwords), bpe_(std::move(bpe)),
      input_(std::move(input)), output_(std::move(output)) {
    if (input_.cols != dim_ || output_.cols != dim_) {
        throw FormatError("embedding matrix width does not match dim");
    }
    if (input_.rows != vocab_.size() + subword_rows() || output_.rows != vocab_.size()) {
        throw FormatError("embedding matrix row count does not match vocabulary");
    }
}

std::uint32_t EmbeddingModel::subword_rows() const noexcept {
    return kind_ == EmbeddingKind::Bpe ? static_cast<std::uint32_t>(bpe_.subunits().size())
                                       : subwords_.bucket_count;
}

std::vector<std::uint32_t> EmbeddingModel::subword_row_ids(std::string_view word) const {
    const auto base = static_cast<std::uint32_t>(vocab_.size());
    std::vector<std::uint32_t> rows;
    if (kind_ == EmbeddingKind::Bpe) {
        for (const auto& unit : bpe_.segment(word)) {
            if (auto id = bpe_.subunit_id(unit)) {
                rows.push_back(base + *id);
            }
        }
    } else {
        for (auto bucket : extract_ngrams(word, subwords_)) {
            rows.push_back(base + bucket);
        }
    }
    return rows;
}

std::vector<std::uint32_t> EmbeddingModel::input_rows(std::string_view word) const {
    std::vector<std::uint32_t> rows;
    if (auto id = vocab_.find(word)) {
        rows.push_back(*id);
    }
    const auto sub = subword_row_ids(word);
    rows.insert(rows.end(), sub.begin(), sub.end());
    return rows;
}

std::vector<double> EmbeddingModel::word_vector(std::string_view word) const {
    std::vector<double> v(dim_, 0.0);
    const auto rows = input_rows(word);
    if (rows.empty()) {
        return v;
    }
    for (auto r : rows) {
        const auto src = input_.row(r);
        for (std::size_t d = 0; d < dim_; ++d) {
            v[d] += src[d];
        }
    }
    for (auto& x : v) {
        x /= static_cast<double>(rows.size());
    }
    return v;
}

std::vector<double> EmbeddingModel::sentence_vector(std::span<const std::string> tokens) const {
    std::vector<double> v(dim_, 0.0);
    if (tokens.empty()) {
        return v;
    }
    for (const auto& t : tokens) {
        const auto w = word_vector(t);
        for (std::size_t d = 0; d < dim_; ++d) {
            v[d] += w[d];
        }
    }
    for (auto& x : v) {
        x /= static_cast<double>(tokens.size());
    }
    return v;
}

bool EmbeddingModel::operator==(const EmbeddingModel& other) const {
    return kind_ == other.kind_ && dim_ == other.dim_ && vocab_ == other.vocab_ &&
           subwords_.n_min == other.subwords_.n_min && subwords_.n_max == other.subwords_.n_max &&
           subword_rows() == other.subword_rows() && bpe_ == other.bpe_ && input_ == other.input_ &&
           output_ == other.output_;
}

std::string EmbeddingModel::serialize() const {
    detail::ByteWriter w;
    w.bytes(std::string_view(kEmbeddingMagic, 8));
    w.uint(dim_);
    w.uint(static_cast<std::uint32_t>(vocab_.size()));
    w.uint(subword_rows());
    w.uint(static_cast<std::uint8_t>(kind_ == EmbeddingKind::Bpe ? 1 : 0));
    for (const auto& e : vocab_.entries()) {
        w.string(e.word);
        w.uint(e.count);
    }
    for (float x : input_.values) w.f32(x);
    for (float x : output_.values) w.f32(x);
    if (kind_ == EmbeddingKind::Bpe) {
        w.uint(static_cast<std::uint32_t>(bpe_.merges().size()));
        for (const auto& m : bpe_.merges()) {
            w.string(m.left);
            w.string(m.right);
        }
    }
    return w.take();
}

EmbeddingModel EmbeddingModel::deserialize(std::string_view bytes, std::uint32_t n_min, std::uint32_t n_max) {
    detail::ByteReader r(bytes);
    const auto magic = r.bytes(8);
    if (magic != std::string_view(kEmbeddingMagic, 8)) {
        throw FormatError("embedding model: expected magic `" + std::string(kEmbeddingMagic, 8) +
                          "`, found `" + std::string(magic) + "`");
    }
    const auto dim = r.uint<std::uint32_t>();
    const auto vocab_size = r.uint<std::uint32_t>();
    const auto bucket_count = r.uint<std::uint32_t>();
    const auto flags = r.uint<std::uint8_t>();
    const auto kind = (flags & 1U) != 0 ? EmbeddingKind::Bpe : EmbeddingKind::FastText;

    std::vector<Vocabulary::Entry> entries;
    entries.reserve(vocab_size);
    std::uint64_t smallest = UINT64_MAX;
    for (std::uint32_t i = 0; i < vocab_size; ++i) {
        auto word = r.string();
        const auto count = r.uint<std::uint64_t>();
        smallest = std::min(smallest, count);
        entries.push_back({std::move(word), count});
    }
    const auto min_count = static_cast<std::uint32_t>(std::min<std::uint64_t>(smallest, UINT32_MAX));

    DenseMatrix<float> input(std::size_t{vocab_size} + bucket_count, dim);
    for (auto& x : input.values) x = r.f32();
    DenseMatrix<float> output(vocab_size, dim);
    for (auto& x : output.values) x = r.f32();

    Vocabulary vocab(std::move(entries), vocab_size == 0 ? 1 : min_count);
    BpeModel bpe;
    if (kind == EmbeddingKind::Bpe) {
        const auto count = r.uint<std::uint32_t>();
        std::vector<BpeMerge> merges;
        for (std::uint32_t i = 0; i < count; ++i) {
            auto left = r.string();
            auto right = r.string();
            merges.push_back({std::move(left), std::move(right)});
        }
        std::vector<std::string> words;
        for (const auto& e : vocab.entries()) words.push_back(e.word);
        bpe = BpeModel(std::move(merges), words);
        if (bpe.subunits().size() != bucket_count) {
            throw FormatError("embedding model: BPE subunit table does not match bucket_count");
        }
    }
    if (!r.at_end()) {
        throw FormatError("embedding model: trailing bytes");
    }
    SubwordIndex subwords{n_min, n_max, bucket_count};
    subwords.validate();
    return EmbeddingModel(kind, dim, std::move(vocab), subwords, std::move(bpe), std::move(input),
                          std::move(output));
}

void EmbeddingModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write embedding model `" + path.string() + "`");
    }
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing embedding model `" + path.string() + "`");
    }
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path, std::uint32_t n_min, std::uint32_t n_max) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open embedding model `" + path.string() + "`");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize(buffer.str(), n_min, n_max);
}

namespace {

// Unigram^0.75 noise distribution sampled by cumulative search.
class NoiseSampler {
public:
    explicit NoiseSampler(const Vocabulary& vocab) {
        cumulative_.reserve(vocab.size());
        double total = 0.0;
        for (const auto& e : vocab.entries()) {
            total += std::pow(static_cast<double>(e.count), 0.75);
            cumulative_.push_back(total);
        }
    }

    std::uint32_t sample(Rng& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<std::uint32_t>(std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1));
    }

private:
    std::vector<double> cumulative_;
};

struct WorkerState {
    Rng rng;
    std::vector<float> hidden;
    std::vector<float> grad;
    std::vector<std::uint32_t> targets;
    double loss = 0.0;
    std::uint64_t updates = 0;

    WorkerState(std::uint64_t seed, std::size_t dim) : rng(seed), hidden(dim), grad(dim) {}
};

} // namespace

SkipgramResult train_skipgram(std::span<const TokenizedDocument> corpus, const EmbedConfig& config, int threads) {
    config.validate();
    Vocabulary vocab = build_vocab(corpus, config.min_count);
    const auto vocab_size = static_cast<std::uint32_t>(vocab.size());

    BpeModel bpe;
    SubwordIndex subwords{config.n_min, config.n_max, config.bucket_count};
    if (config.kind == EmbeddingKind::Bpe) {
        const auto learned = learn_bpe(corpus, config.bpe_merges);
        std::vector<std::string> words;
        for (const auto& e : vocab.entries()) words.push_back(e.word);
        bpe = BpeModel(learned.merges(), words);
        subwords.bucket_count = static_cast<std::uint32_t>(bpe.subunits().size());
    }
    const std::uint32_t subword_rows =
        config.kind == EmbeddingKind::Bpe ? static_cast<std::uint32_t>(bpe.subunits().size()) : config.bucket_count;

    const std::size_t dim = config.dim;
    Rng init_rng(config.seed);
    DenseMatrix<float> input(std::size_t{vocab_size} + subword_rows, dim);
    const double bound = 1.0 / static_cast<double>(dim);
    for (auto& x : input.values) {
        x = static_cast<float>(init_rng.uniform(-bound, bound));
    }
    DenseMatrix<float> output(vocab_size, dim, 0.0F);

    std::vector<std::vector<std::uint32_t>> rows_of(vocab_size);
    for (std::uint32_t id = 0; id < vocab_size; ++id) {
        auto& rows = rows_of[id];
        rows.push_back(id);
        if (config.kind == EmbeddingKind::Bpe) {
            for (const auto& unit : bpe.segment(vocab[id].word)) {
                if (auto sub = bpe.subunit_id(unit)) rows.push_back(vocab_size + *sub);
            }
        } else {
            for (auto bucket : extract_ngrams(vocab[id].word, subwords)) rows.push_back(vocab_size + bucket);
        }
    }

    std::vector<std::vector<std::uint32_t>> docs;
    docs.reserve(corpus.size());
    std::uint64_t tokens_per_epoch = 0;
    for (const auto& doc : corpus) {
        std::vector<std::uint32_t> ids;
        for (const auto& t : doc.tokens) {
            if (auto id = vocab.find(t)) ids.push_back(*id);
        }
        tokens_per_epoch += ids.size();
        docs.push_back(std::move(ids));
    }

    const NoiseSampler noise(vocab);
    const double total_updates = static_cast<double>(tokens_per_epoch) * config.epochs;
    std::atomic<std::uint64_t> processed{0};
    std::vector<double> epoch_loss;

    const int workers = std::max(1, threads);
    std::vector<WorkerState> states;
    for (int w = 0; w < workers; ++w) {
        states.emplace_back(derive_seed(config.seed, static_cast<std::uint64_t>(w) + 1), dim);
    }

    auto train_shard = [&](WorkerState& st, std::size_t first_doc, std::size_t last_doc) {
        for (std::size_t di = first_doc; di < last_doc; ++di) {
            const auto& ids = docs[di];
            for (std::size_t pos = 0; pos < ids.size(); ++pos) {
                const double progress = static_cast<double>(processed.load(std::memory_order_relaxed)) / total_updates;
                const auto lr = static_cast<float>(config.learning_rate * std::max(0.0, 1.0 - progress));
                const std::size_t span = 1 + st.rng.below(config.window);
                const std::size_t lo = pos >= span ? pos - span : 0;
                const std::size_t hi = std::min(ids.size() - 1, pos + span);
                for (std::size_t c = lo; c <= hi; ++c) {
                    if (c == pos) continue;
                    st.targets.assign(1, ids[c]);
                    if (vocab_size > 1) {
                        for (std::uint32_t k = 0; k < config.negatives; ++k) {
                            std::uint32_t neg;
                            do {
                                neg = noise.sample(st.rng);
                            } while (neg == ids[c]);
                            st.targets.push_back(neg);
                        }
                    }
                    st.loss += skipgram_step<float>(input, output, rows_of[ids[pos]], st.targets, lr, st.hidden,
                                                    st.grad, InputUpdate::Shared);
                    ++st.updates;
                }
                processed.fetch_add(1, std::memory_order_relaxed);
            }
        }
    };

    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (auto& st : states) {
            st.loss = 0.0;
            st.updates = 0;
        }
        if (workers == 1) {
            train_shard(states[0], 0, docs.size());
        } else {
#pragma omp parallel for num_threads(workers) schedule(static, 1)
            for (int w = 0; w < workers; ++w) {
                const std::size_t first = docs.size() * static_cast<std::size_t>(w) / static_cast<std::size_t>(workers);
                const std::size_t last = docs.size() * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(workers);
                train_shard(states[static_cast<std::size_t>(w)], first, last);
            }
        }
        double loss = 0.0;
        std::uint64_t updates = 0;
        for (const auto& st : states) {
            loss += st.loss;
            updates += st.updates;
        }
        const double mean = updates == 0 ? 0.0 : loss / static_cast<double>(updates);
        if (!std::isfinite(mean)) {
            throw TrainingError("skipgram training diverged in epoch " + std::to_string(epoch + 1));
        }
        epoch_loss.push_back(mean);
    }

    for (float x : input.values) {
        if (!std::isfinite(x)) throw TrainingError("skipgram training produced non-finite parameters");
    }

    return {EmbeddingModel(config.kind, config.dim, std::move(vocab), subwords, std::move(bpe), std::move(input),
                           std::move(output)),
            std::move(epoch_loss)};
}

} // namespace tnz
