#include "tnz/gbdt.hpp"

#include "tnz/error.hpp"
#include "tnz/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace tnz {

// --- numbers ------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("invalid number `" + std::string(s) + "`");
    }
    return v;
}

namespace {

template <typename Int>
Int parse_int(std::string_view s) {
    Int v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("invalid integer `" + std::string(s) + "`");
    }
    return v;
}

std::vector<std::string_view> split_words(std::string_view line) {
    std::vector<std::string_view> words;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && line[pos] == ' ') ++pos;
        const auto end = line.find(' ', pos);
        const auto stop = end == std::string_view::npos ? line.size() : end;
        if (stop > pos) words.push_back(line.substr(pos, stop - pos));
        pos = stop;
    }
    return words;
}

} // namespace

// --- config -------------------------------------------------------------------

const std::vector<std::string>& gbdt_parameter_names() {
    static const std::vector<std::string> names = {
        "num_leaves", "max_depth", "learning_rate", "n_estimators", "min_child_weight", "reg_alpha",
        "reg_lambda", "subsample", "colsample_bytree", "max_bins", "seed"};
    return names;
}

void GbdtConfig::validate() const {
    if (num_leaves < 2) throw ConfigError("num_leaves must be >= 2");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must be in (0, 1]");
    if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) throw ConfigError("colsample_bytree must be in (0, 1]");
    if (max_bins < 2 || max_bins > 65535) throw ConfigError("max_bins must be in [2, 65535]");
    if (!(min_child_weight >= 0.0)) throw ConfigError("min_child_weight must be >= 0");
    if (!(reg_alpha >= 0.0) || !(reg_lambda >= 0.0)) throw ConfigError("reg_alpha and reg_lambda must be >= 0");
}

std::string GbdtConfig::to_line() const {
    std::string line;
    auto add = [&line](std::string_view key, const std::string& value) {
        if (!line.empty()) line.push_back(' ');
        line.append(key).append("=").append(value);
    };
    add("num_leaves", std::to_string(num_leaves));
    add("max_depth", std::to_string(max_depth));
    add("learning_rate", format_double(learning_rate));
    add("n_estimators", std::to_string(n_estimators));
    add("min_child_weight", format_double(min_child_weight));
    add("reg_alpha", format_double(reg_alpha));
    add("reg_lambda", format_double(reg_lambda));
    add("subsample", format_double(subsample));
    add("colsample_bytree", format_double(colsample_bytree));
    add("max_bins", std::to_string(max_bins));
    add("seed", std::to_string(seed));
    return line;
}

void GbdtConfig::set(std::string_view key, std::string_view value) {
    try {
        if (key == "num_leaves") num_leaves = parse_int<std::uint32_t>(value);
        else if (key == "max_depth") max_depth = parse_int<int>(value);
        else if (key == "learning_rate") learning_rate = parse_double(value);
        else if (key == "n_estimators") n_estimators = parse_int<std::uint32_t>(value);
        else if (key == "min_child_weight") min_child_weight = parse_double(value);
        else if (key == "reg_alpha") reg_alpha = parse_double(value);
        else if (key == "reg_lambda") reg_lambda = parse_double(value);
        else if (key == "subsample") subsample = parse_double(value);
        else if (key == "colsample_bytree") colsample_bytree = parse_double(value);
        else if (key == "max_bins") max_bins = parse_int<std::uint32_t>(value);
        else if (key == "seed") seed = parse_int<std::uint64_t>(value);
        else throw ConfigError("unknown gbdt parameter `" + std::string(key) + "`");
    } catch (const FormatError& e) {
        throw ConfigError("gbdt parameter `" + std::string(key) + "`: " + e.what());
    }
}

GbdtConfig GbdtConfig::from_line(std::string_view line) {
    GbdtConfig config;
    for (auto word : split_words(line)) {
        const auto eq = word.find('=');
        if (eq == std::string_view::npos) throw FormatError("malformed config entry `" + std::string(word) + "`");
        config.set(word.substr(0, eq), word.substr(eq + 1));
    }
    return config;
}

// --- binning ------------------------------------------------------------------

FeatureBinning::FeatureBinning(std::vector<std::vector<double>> bounds) : bounds_(std::move(bounds)) {
    for (const auto& b : bounds_) {
        if (b.empty() || b.size() > 65535) throw FormatError("feature binning needs 1..65535 bounds");
        for (std::size_t i = 1; i < b.size(); ++i) {
            if (!(b[i - 1] < b[i])) throw FormatError("bin bounds must be strictly increasing");
        }
    }
}

FeatureBinning FeatureBinning::fit(const DenseMatrix<double>& rows, std::uint32_t max_bins) {
    std::vector<std::vector<double>> bounds(rows.cols);
    std::vector<double> column(rows.rows);
    for (std::size_t f = 0; f < rows.cols; ++f) {
        for (std::size_t r = 0; r < rows.rows; ++r) column[r] = rows(r, f);
        std::sort(column.begin(), column.end());
        std::vector<double> distinct;
        std::unique_copy(column.begin(), column.end(), std::back_inserter(distinct));
        auto& b = bounds[f];
        if (distinct.size() <= max_bins) {
            b = std::move(distinct);
        } else {
            const std::size_t n = column.size();
            for (std::size_t q = 1; q <= max_bins; ++q) {
                const std::size_t rank = (q * n + max_bins - 1) / max_bins; // ceil(q n / B)
                const double v = column[rank - 1];
                if (b.empty() || v > b.back()) b.push_back(v);
            }
        }
        if (b.empty()) b.push_back(0.0);
    }
    return FeatureBinning(std::move(bounds));
}

std::uint16_t FeatureBinning::bin(std::size_t f, double value) const {
    const auto& b = bounds_[f];
    if (std::isnan(value)) return 0;
    const auto it = std::lower_bound(b.begin(), b.end(), value);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - b.begin()), b.size() - 1);
    return static_cast<std::uint16_t>(idx);
}

BinnedMatrix FeatureBinning::apply(const DenseMatrix<double>& rows) const {
    if (rows.cols != features()) throw Error("binning width does not match data width");
    BinnedMatrix out;
    out.rows = rows.rows;
    out.bin_counts.reserve(features());
    for (const auto& b : bounds_) out.bin_counts.push_back(static_cast<std::uint32_t>(b.size()));
    out.codes.resize(features() * rows.rows);
    for (std::size_t f = 0; f < features(); ++f) {
        for (std::size_t r = 0; r < rows.rows; ++r) {
            out.codes[f * rows.rows + r] = bin(f, rows(r, f));
        }
    }
    return out;
}

// --- split search -------------------------------------------------------------

double soft_threshold(double g, double alpha) {
    const double mag = std::max(std::abs(g) - alpha, 0.0);
    return g < 0 ? -mag : mag;
}

double leaf_objective(double g, double h, const GbdtConfig& config) {
    const double denom = h + config.reg_lambda;
    if (!(denom > 0.0)) return 0.0;
    const double t = soft_threshold(g, config.reg_alpha);
    return t * t / (2.0 * denom);
}

double leaf_weight(double g, double h, const GbdtConfig& config) {
    const double denom = h + config.reg_lambda;
    if (!(denom > 0.0)) return 0.0;
    return -soft_threshold(g, config.reg_alpha) / denom;
}

bool gain_improves(double gain, double best) {
    return gain > best + kGainTieTolerance * std::max(1.0, std::abs(best));
}

double minimum_split_gain(double g, double h, const GbdtConfig& config) {
    return kGainTieTolerance * std::max(1.0, leaf_objective(g, h, config));
}

std::optional<SplitCandidate> best_split(const HistogramSet& histograms, std::span<const std::uint32_t> features,
                                         double total_g, double total_h, std::uint32_t total_count,
                                         const GbdtConfig& config) {
    std::vector<std::uint32_t> order(features.begin(), features.end());
    std::sort(order.begin(), order.end());
    const double parent = leaf_objective(total_g, total_h, config);
    const double threshold = minimum_split_gain(total_g, total_h, config);

    std::optional<SplitCandidate> best;
    for (auto f : order) {
        const auto hist = histograms.feature(f);
        double gl = 0.0;
        double hl = 0.0;
        std::uint32_t cl = 0;
        for (std::size_t b = 0; b + 1 < hist.size(); ++b) {
            gl += hist[b].g;
            hl += hist[b].h;
            cl += hist[b].count;
            if (cl == 0) continue;
            const std::uint32_t cr = total_count - cl;
            if (cr == 0) break;
            const double gr = total_g - gl;
            const double hr = total_h - hl;
            if (hl < config.min_child_weight || hr < config.min_child_weight) continue;
            const double gain = leaf_objective(gl, hl, config) + leaf_objective(gr, hr, config) - parent;
            if (!(gain > threshold)) continue;
            if (!best || gain_improves(gain, best->gain)) {
                best = SplitCandidate{f, static_cast<std::uint32_t>(b), gain, gl, hl, cl, gr, hr, cr};
            }
        }
    }
    return best;
}

// --- trees --------------------------------------------------------------------

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw FormatError("tree without nodes");
    std::vector<int> parents(nodes_.size(), 0);
    for (const auto& n : nodes_) {
        if (n.is_leaf()) {
            if (!std::isfinite(n.value)) throw FormatError("non-finite leaf value");
            continue;
        }
        for (auto child : {n.left, n.right}) {
            if (child <= 0 || static_cast<std::size_t>(child) >= nodes_.size()) {
                throw FormatError("tree child id out of range");
            }
            ++parents[static_cast<std::size_t>(child)];
        }
    }
    for (std::size_t i = 1; i < parents.size(); ++i) {
        if (parents[i] != 1) throw FormatError("tree node " + std::to_string(i) + " is not reachable exactly once");
    }
}

std::size_t Tree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.is_leaf(); }));
}

std::size_t Tree::depth() const {
    std::function<std::size_t(std::int32_t)> walk = [&](std::int32_t id) -> std::size_t {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        return n.is_leaf() ? 0 : 1 + std::max(walk(n.left), walk(n.right));
    };
    return walk(0);
}

double Tree::predict_binned(const BinnedMatrix& data, std::size_t row) const {
    const TreeNode* n = &nodes_[0];
    while (!n->is_leaf()) {
        const auto code = data.codes[static_cast<std::size_t>(n->feature) * data.rows + row];
        n = &nodes_[static_cast<std::size_t>(code <= n->bin ? n->left : n->right)];
    }
    return n->value;
}

double Tree::predict(std::span<const double> x, const FeatureBinning& binning) const {
    const TreeNode* n = &nodes_[0];
    while (!n->is_leaf()) {
        const auto f = static_cast<std::size_t>(n->feature);
        n = &nodes_[static_cast<std::size_t>(binning.bin(f, x[f]) <= n->bin ? n->left : n->right)];
    }
    return n->value;
}

namespace {

struct OpenLeaf {
    std::int32_t node = 0;
    std::vector<std::uint32_t> rows;
    std::uint32_t depth = 0;
    double g = 0.0;
    double h = 0.0;
    HistogramSet hist;
    std::optional<SplitCandidate> split;
};

} // namespace

GrownTree grow_tree(const BinnedMatrix& data, std::span<const std::uint32_t> rows,
                    std::span<const std::uint32_t> features, std::span<const GradientPair> gradients,
                    const GbdtConfig& config, int threads) {
    std::vector<std::uint32_t> feats(features.begin(), features.end());
    std::sort(feats.begin(), feats.end());

    auto evaluate = [&](OpenLeaf& leaf) {
        leaf.split.reset();
        const bool depth_ok = config.max_depth <= 0 || leaf.depth < static_cast<std::uint32_t>(config.max_depth);
        if (leaf.rows.size() >= 2 && depth_ok) {
            leaf.split = best_split(leaf.hist, feats, leaf.g, leaf.h, static_cast<std::uint32_t>(leaf.rows.size()), config);
        }
    };

    std::vector<TreeNode> nodes(1);
    std::vector<OpenLeaf> open;
    {
        OpenLeaf root;
        root.rows.assign(rows.begin(), rows.end());
        for (auto r : root.rows) {
            root.g += gradients[r].g;
            root.h += gradients[r].h;
        }
        root.hist = HistogramSet(data.bin_counts);
        build_histograms_omp(data, root.rows, feats, gradients, root.hist, threads);
        evaluate(root);
        open.push_back(std::move(root));
    }

    std::size_t leaves = 1;
    while (leaves < config.num_leaves) {
        // `open` stays sorted by node id, so ties keep the lowest id.
        std::optional<std::size_t> pick;
        for (std::size_t i = 0; i < open.size(); ++i) {
            if (open[i].split && (!pick || gain_improves(open[i].split->gain, open[*pick].split->gain))) {
                pick = i;
            }
        }
        if (!pick) break;

        OpenLeaf parent = std::move(open[*pick]);
        open.erase(open.begin() + static_cast<std::ptrdiff_t>(*pick));
        const auto& split = *parent.split;

        OpenLeaf left;
        OpenLeaf right;
        const auto column = data.column(split.feature);
        for (auto r : parent.rows) {
            (column[r] <= split.bin ? left.rows : right.rows).push_back(r);
        }
        left.node = static_cast<std::int32_t>(nodes.size());
        right.node = left.node + 1;
        nodes.push_back({});
        nodes.push_back({});
        auto& pn = nodes[static_cast<std::size_t>(parent.node)];
        pn.feature = static_cast<std::int32_t>(split.feature);
        pn.bin = split.bin;
        pn.left = left.node;
        pn.right = right.node;

        left.depth = right.depth = parent.depth + 1;
        left.g = split.left_g;
        left.h = split.left_h;
        right.g = split.right_g;
        right.h = split.right_h;

        OpenLeaf& small = left.rows.size() <= right.rows.size() ? left : right;
        OpenLeaf& large = &small == &left ? right : left;
        small.hist = HistogramSet(data.bin_counts);
        build_histograms_omp(data, small.rows, feats, gradients, small.hist, threads);
        large.hist = HistogramSet(data.bin_counts);
        large.hist.subtract_from(parent.hist, small.hist, feats);

        evaluate(left);
        evaluate(right);
        open.push_back(std::move(left));
        open.push_back(std::move(right));
        ++leaves;
    }

    GrownTree out;
    for (const auto& leaf : open) {
        nodes[static_cast<std::size_t>(leaf.node)].value = leaf_weight(leaf.g, leaf.h, config);
        out.leaves.push_back({leaf.node, leaf.g, leaf.h, static_cast<std::uint32_t>(leaf.rows.size()), leaf.depth});
    }
    out.tree = Tree(std::move(nodes));
    return out;
}

// --- loss ---------------------------------------------------------------------

ClassScores softmax(const ClassScores& raw) {
    const double m = *std::max_element(raw.begin(), raw.end());
    ClassScores p{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        p[k] = std::exp(raw[k] - m);
        sum += p[k];
    }
    for (auto& v : p) v /= sum;
    return p;
}

double cross_entropy(const ClassScores& raw, Sentiment truth) {
    const double m = *std::max_element(raw.begin(), raw.end());
    double sum = 0.0;
    for (double r : raw) sum += std::exp(r - m);
    return m + std::log(sum) - raw[class_index(truth)];
}

std::array<GradientPair, kNumClasses> compute_gradients(const ClassScores& raw, Sentiment truth) {
    const auto p = softmax(raw);
    std::array<GradientPair, kNumClasses> out{};
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        out[k].g = p[k] - (k == class_index(truth) ? 1.0 : 0.0);
        out[k].h = p[k] * (1.0 - p[k]);
    }
    return out;
}

Sentiment argmax_label(const ClassScores& probabilities) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumClasses; ++k) {
        if (probabilities[k] > probabilities[best]) best = k;
    }
    return class_at(best);
}

// --- model --------------------------------------------------------------------

GbdtModel::GbdtModel(GbdtConfig config, FeatureBinning binning, ClassScores init_scores,
                     std::vector<std::array<Tree, kNumClasses>> rounds)
    : config_(config), binning_(std::move(binning)), init_scores_(init_scores), rounds_(std::move(rounds)) {
    for (const auto& round : rounds_) {
        for (const auto& tree : round) {
            for (const auto& n : tree.nodes()) {
                if (!n.is_leaf() && (static_cast<std::size_t>(n.feature) >= binning_.features() ||
                                     n.bin >= binning_.bounds(static_cast<std::size_t>(n.feature)).size())) {
                    throw FormatError("tree split refers to an unknown feature or bin");
                }
            }
        }
    }
}

ClassScores GbdtModel::raw_scores(std::span<const double> x) const {
    if (x.size() != dim()) {
        throw Error("feature vector has width " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(dim()));
    }
    ClassScores raw = init_scores_;
    for (const auto& round : rounds_) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            raw[k] += config_.learning_rate * round[k].predict(x, binning_);
        }
    }
    return raw;
}

ClassScores GbdtModel::predict_proba(std::span<const double> x) const { return softmax(raw_scores(x)); }

Sentiment GbdtModel::predict_label(std::span<const double> x) const { return argmax_label(predict_proba(x)); }

namespace {

void write_preorder(std::string& out, const Tree& tree, std::int32_t id) {
    const auto& n = tree.nodes()[static_cast<std::size_t>(id)];
    if (n.is_leaf()) {
        out += "leaf " + std::to_string(id) + " value " + format_double(n.value) + "\n";
        return;
    }
    out += "node " + std::to_string(id) + " feat " + std::to_string(n.feature) + " bin " + std::to_string(n.bin) +
           " L " + std::to_string(n.left) + " R " + std::to_string(n.right) + "\n";
    write_preorder(out, tree, n.left);
    write_preorder(out, tree, n.right);
}

} // namespace

std::string GbdtModel::serialize() const {
    std::string out;
    out += std::string(kGbdtMagic) + "\n";
    out += config_.to_line() + "\n";
    out += "init";
    for (double s : init_scores_) out += " " + format_double(s);
    out += "\n";
    out += "binning " + std::to_string(binning_.features()) + "\n";
    for (std::size_t f = 0; f < binning_.features(); ++f) {
        const auto& b = binning_.bounds(f);
        out += "bins " + std::to_string(f) + " " + std::to_string(b.size());
        for (double v : b) out += " " + format_double(v);
        out += "\n";
    }
    for (std::size_t r = 0; r < rounds_.size(); ++r) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            out += "tree " + std::to_string(r) + " " + std::to_string(k) + "\n";
            write_preorder(out, rounds_[r][k], 0);
        }
    }
    return out;
}

GbdtModel GbdtModel::deserialize(std::string_view text) {
    std::vector<std::string_view> lines;
    for (std::size_t pos = 0; pos < text.size();) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    std::size_t li = 0;
    auto next = [&]() -> std::string_view {
        if (li >= lines.size()) throw FormatError("gbdt model: unexpected end of file");
        return lines[li++];
    };

    const auto magic = next();
    if (magic != kGbdtMagic) {
        throw FormatError("gbdt model: expected magic `" + std::string(kGbdtMagic) + "`, found `" +
                          std::string(magic.substr(0, 16)) + "`");
    }
    const auto config = GbdtConfig::from_line(next());

    ClassScores init{};
    {
        const auto w = split_words(next());
        if (w.size() != 1 + kNumClasses || w[0] != "init") throw FormatError("gbdt model: malformed init line");
        for (std::size_t k = 0; k < kNumClasses; ++k) init[k] = parse_double(w[k + 1]);
    }

    std::vector<std::vector<double>> bounds;
    {
        const auto w = split_words(next());
        if (w.size() != 2 || w[0] != "binning") throw FormatError("gbdt model: malformed binning header");
        const auto dim = parse_int<std::size_t>(w[1]);
        for (std::size_t f = 0; f < dim; ++f) {
            const auto b = split_words(next());
            if (b.size() < 3 || b[0] != "bins" || parse_int<std::size_t>(b[1]) != f) {
                throw FormatError("gbdt model: malformed bins line for feature " + std::to_string(f));
            }
            const auto count = parse_int<std::size_t>(b[2]);
            if (b.size() != 3 + count) throw FormatError("gbdt model: bin count mismatch");
            std::vector<double> values;
            for (std::size_t i = 0; i < count; ++i) values.push_back(parse_double(b[3 + i]));
            bounds.push_back(std::move(values));
        }
    }

    std::vector<std::array<Tree, kNumClasses>> rounds;
    std::size_t trees_read = 0;
    while (li < lines.size()) {
        const auto header = split_words(next());
        if (header.empty()) continue;
        if (header.size() != 3 || header[0] != "tree") throw FormatError("gbdt model: expected tree header");
        const auto round = parse_int<std::size_t>(header[1]);
        const auto cls = parse_int<std::size_t>(header[2]);
        if (round != trees_read / kNumClasses || cls != trees_read % kNumClasses) {
            throw FormatError("gbdt model: trees out of order");
        }
        ++trees_read;
        if (cls == 0) rounds.emplace_back();

        std::vector<TreeNode> nodes;
        std::vector<bool> seen;
        std::size_t pending = 1; // subtrees still to read in preorder
        while (pending > 0) {
            const auto w = split_words(next());
            TreeNode node;
            std::size_t id = 0;
            if (w.size() == 4 && w[0] == "leaf" && w[2] == "value") {
                id = parse_int<std::size_t>(w[1]);
                node.value = parse_double(w[3]);
                --pending;
            } else if (w.size() == 10 && w[0] == "node" && w[2] == "feat" && w[4] == "bin" && w[6] == "L" &&
                       w[8] == "R") {
                id = parse_int<std::size_t>(w[1]);
                node.feature = parse_int<std::int32_t>(w[3]);
                node.bin = parse_int<std::uint32_t>(w[5]);
                node.left = parse_int<std::int32_t>(w[7]);
                node.right = parse_int<std::int32_t>(w[9]);
                if (node.feature < 0) throw FormatError("gbdt model: negative split feature");
                ++pending;
            } else {
                throw FormatError("gbdt model: malformed node line");
            }
            if (id >= nodes.size()) {
                nodes.resize(id + 1);
                seen.resize(id + 1, false);
            }
            if (seen[id]) throw FormatError("gbdt model: duplicate node id");
            seen[id] = true;
            nodes[id] = node;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw FormatError("gbdt model: tree has missing node ids");
        }
        rounds.back()[cls] = Tree(std::move(nodes));
    }
    if (trees_read % kNumClasses != 0 || rounds.size() != config.n_estimators) {
        throw FormatError("gbdt model: expected " + std::to_string(config.n_estimators) + " rounds, found " +
                          std::to_string(rounds.size()));
    }
    return GbdtModel(config, FeatureBinning(std::move(bounds)), init, std::move(rounds));
}

void GbdtModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write gbdt model `" + path.string() + "`");
    out << serialize();
    if (!out) throw Error("failed writing gbdt model `" + path.string() + "`");
}

GbdtModel GbdtModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open gbdt model `" + path.string() + "`");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize(buffer.str());
}

// --- training -----------------------------------------------------------------

GbdtModel fit(const FeatureMatrix& data, const GbdtConfig& config, int threads, std::vector<double>* loss_trace) {
    config.validate();
    try {
        data.validate();
    } catch (const Error& e) {
        throw TrainingError(e.what());
    }
    const std::size_t n = data.size();
    if (n < 2) throw TrainingError("gbdt needs at least 2 rows");
    const auto dist = class_histogram(data.labels);
    if (std::count_if(dist.counts.begin(), dist.counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
        throw TrainingError("gbdt needs at least 2 classes in the training data");
    }

    auto binning = FeatureBinning::fit(data.rows, config.max_bins);
    const auto binned = binning.apply(data.rows);

    ClassScores init{};
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        init[k] = std::log(std::max(dist.proportions[k], 1e-12));
    }

    std::vector<ClassScores> raw(n, init);
    std::vector<std::vector<GradientPair>> grads(kNumClasses, std::vector<GradientPair>(n));
    Rng rng(config.seed);

    std::vector<std::uint32_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::uint32_t{0});
    std::vector<std::uint32_t> all_features(data.dim());
    std::iota(all_features.begin(), all_features.end(), std::uint32_t{0});

    const std::size_t bag_size =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.subsample * static_cast<double>(n))));
    const std::size_t feature_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.colsample_bytree * static_cast<double>(data.dim()))));

    std::vector<std::array<Tree, kNumClasses>> rounds;
    rounds.reserve(config.n_estimators);
    for (std::uint32_t round = 0; round < config.n_estimators; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto gp = compute_gradients(raw[i], data.labels[i]);
            for (std::size_t k = 0; k < kNumClasses; ++k) grads[k][i] = gp[k];
        }

        std::vector<std::uint32_t> bag = all_rows;
        if (bag_size < n) {
            rng.shuffle(std::span(bag));
            bag.resize(bag_size);
            std::sort(bag.begin(), bag.end());
        }

        std::array<Tree, kNumClasses> trees;
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            std::vector<std::uint32_t> feats = all_features;
            if (feature_count < feats.size()) {
                rng.shuffle(std::span(feats));
                feats.resize(feature_count);
                std::sort(feats.begin(), feats.end());
            }
            trees[k] = grow_tree(binned, bag, feats, grads[k], config, threads).tree;
        }
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) {
                raw[i][k] += config.learning_rate * trees[k].predict_binned(binned, i);
            }
            loss += cross_entropy(raw[i], data.labels[i]);
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss)) {
            throw TrainingError("gbdt training loss became non-finite in round " + std::to_string(round + 1));
        }
        if (loss_trace) loss_trace->push_back(loss);
        rounds.push_back(std::move(trees));
    }
    return GbdtModel(config, std::move(binning), init, std::move(rounds));
}

} // namespace tnz
