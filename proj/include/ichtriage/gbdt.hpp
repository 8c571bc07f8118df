#pragma once

// Gradient-boosted decision trees: Newton boosting on the logistic loss with
// exact (midpoint) split search and three tree-growth policies.

#include <algorithm>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"

namespace ichtriage::gbdt {

inline constexpr double kBaseRateClip = 1e-6;

enum class Growth { Leafwise, Depthwise, Oblivious };

inline std::string_view to_string(Growth g) {
    switch (g) {
        case Growth::Leafwise: return "leafwise";
        case Growth::Depthwise: return "depthwise";
        case Growth::Oblivious: return "oblivious";
    }
    return "?";
}

inline Growth parse_growth(std::string_view s) {
    if (s == "leafwise") return Growth::Leafwise;
    if (s == "depthwise") return Growth::Depthwise;
    if (s == "oblivious") return Growth::Oblivious;
    throw Error(ErrorKind::Configuration, "unknown growth policy '" + std::string(s) + "'");
}

struct Config {
    std::string name = "custom";
    int rounds = 100;
    double learning_rate = 0.1;
    int max_leaves = 31;
    // Depth cap for depthwise/oblivious trees; for leafwise, <= 0 means unlimited.
    int max_depth = 6;
    int min_samples_leaf = 1;
    double row_subsample = 1.0;
    double feature_subsample = 1.0;
    double l2_reg = 1.0;
    Growth growth = Growth::Depthwise;
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::Configuration, "gbdt config: " + m); };
        if (rounds < 1) fail("rounds must be positive");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must lie in (0,1]");
        if (max_leaves < 2) fail("max_leaves must be >= 2");
        if (growth != Growth::Leafwise && max_depth < 1) fail("max_depth must be >= 1");
        if (min_samples_leaf < 1) fail("min_samples_leaf must be positive");
        if (!(row_subsample > 0.0 && row_subsample <= 1.0)) fail("row_subsample must lie in (0,1]");
        if (!(feature_subsample > 0.0 && feature_subsample <= 1.0)) fail("feature_subsample must lie in (0,1]");
        if (!(l2_reg >= 0.0)) fail("l2_reg must be non-negative");
    }
};

// Preset A: leafwise, 31 leaves. Preset B: oblivious depth 6. Preset C:
// depthwise depth 6. All 200 rounds, lr 0.05, lambda 1.
inline Config preset_leafwise(std::uint64_t seed = 0) {
    Config c;
    c.name = "leafwise31";
    c.rounds = 200;
    c.learning_rate = 0.05;
    c.max_leaves = 31;
    c.max_depth = 0;
    c.min_samples_leaf = 20;
    c.l2_reg = 1.0;
    c.growth = Growth::Leafwise;
    c.seed = seed;
    return c;
}

inline Config preset_oblivious(std::uint64_t seed = 0) {
    Config c;
    c.name = "oblivious6";
    c.rounds = 200;
    c.learning_rate = 0.05;
    c.max_leaves = 64;
    c.max_depth = 6;
    c.min_samples_leaf = 1;
    c.l2_reg = 1.0;
    c.growth = Growth::Oblivious;
    c.seed = seed + 1;
    return c;
}

inline Config preset_depthwise(std::uint64_t seed = 0) {
    Config c;
    c.name = "depthwise6";
    c.rounds = 200;
    c.learning_rate = 0.05;
    c.max_leaves = 64;
    c.max_depth = 6;
    c.min_samples_leaf = 1;
    c.l2_reg = 1.0;
    c.growth = Growth::Depthwise;
    c.seed = seed + 2;
    return c;
}

inline std::vector<Config> default_presets(std::uint64_t seed = 0) {
    return {preset_leafwise(seed), preset_oblivious(seed), preset_depthwise(seed)};
}

/// Dense row-major feature matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * cols_, cols_); }

    void push_row(std::span<const double> values) {
        if (rows_ == 0 && cols_ == 0) cols_ = values.size();
        if (values.size() != cols_) throw Error(ErrorKind::Arity, "row has " + std::to_string(values.size()) + " features, expected " + std::to_string(cols_));
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const Node&, const Node&) = default;
};

/// Binary regression tree; rows with x[feature] < threshold go left.
struct Tree {
    std::vector<Node> nodes;

    double evaluate(std::span<const double> x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf())
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] < nodes[i].threshold ? nodes[i].left : nodes[i].right);
        return nodes[i].value;
    }

    std::size_t num_leaves() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
    }

    std::size_t depth() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            best = std::max(best, d[i]);
            if (!nodes[i].is_leaf()) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            }
        }
        return best;
    }

    friend bool operator==(const Tree&, const Tree&) = default;
};

struct Model {
    std::size_t num_features = 0;
    double base_score = 0.0;
    std::vector<Tree> trees;

    double margin(std::span<const double> x) const {
        if (x.size() != num_features)
            throw Error(ErrorKind::Arity, "feature row has " + std::to_string(x.size()) + " entries, model expects " + std::to_string(num_features));
        double m = base_score;
        for (const auto& t : trees) m += t.evaluate(x);
        return m;
    }

    friend bool operator==(const Model&, const Model&) = default;
};

inline double predict(const Model& model, std::span<const double> x) {
    // Clamp to the open interval so callers can rely on 0 < p < 1.
    return clip(sigmoid(model.margin(x)), std::numeric_limits<double>::min(), 1.0 - 0x1.0p-53);
}

inline Model constant_model(std::size_t num_features, double probability) {
    Model m;
    m.num_features = num_features;
    m.base_score = logit(clip(probability, kBaseRateClip, 1.0 - kBaseRateClip));
    return m;
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Mean logistic loss computed from margins; exact for saturated margins.
inline double margin_log_loss(std::span<const double> margins, std::span<const std::uint8_t> labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) s += labels[i] ? softplus(-margins[i]) : softplus(margins[i]);
    return s / static_cast<double>(margins.size());
}

namespace detail {

struct SplitCandidate {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
    bool valid() const { return feature >= 0; }
};

inline double leaf_objective(double g, double h, double lambda) {
    const double denom = h + lambda;
    return denom > 0.0 ? g * g / denom : 0.0;
}

inline double split_gain(double gl, double hl, double gr, double hr, double lambda) {
    return 0.5 * (leaf_objective(gl, hl, lambda) + leaf_objective(gr, hr, lambda) - leaf_objective(gl + gr, hl + hr, lambda));
}

inline double midpoint(double a, double b) {
    double t = a + (b - a) / 2.0;
    if (!(t > a)) t = b;
    return t;
}

class TreeBuilder {
public:
    TreeBuilder(const std::vector<double>& columns, std::size_t rows, const std::vector<std::vector<std::uint32_t>>& presorted,
                const Config& cfg)
        : cols_(columns), rows_(rows), presorted_(presorted), cfg_(cfg), goes_left_(rows, 0) {}

    Tree build(std::span<const double> grad, std::span<const double> hess, const std::vector<std::uint32_t>& sample,
               const std::vector<std::size_t>& features) {
        grad_ = grad;
        hess_ = hess;
        features_ = features;
        in_sample_.assign(rows_, 0);
        for (auto r : sample) in_sample_[r] = 1;
        switch (cfg_.growth) {
            case Growth::Leafwise: return build_leafwise(sample);
            case Growth::Depthwise: return build_depthwise(sample);
            case Growth::Oblivious: return build_oblivious(sample);
        }
        return {};
    }

private:
    struct Work {
        std::vector<std::vector<std::uint32_t>> sorted;  // per active feature
        double g = 0, h = 0;
        std::size_t count = 0;
        std::size_t depth = 0;
        int node = 0;
        SplitCandidate best;
    };

    double x(std::size_t feature, std::uint32_t row) const { return cols_[feature * rows_ + row]; }

    double leaf_value(double g, double h) const {
        const double denom = h + cfg_.l2_reg;
        return denom > 0.0 ? -g / denom * cfg_.learning_rate : 0.0;
    }

    Work make_root(const std::vector<std::uint32_t>& sample) {
        Work w;
        w.sorted.resize(features_.size());
        for (std::size_t j = 0; j < features_.size(); ++j) {
            const auto& order = presorted_[features_[j]];
            auto& dst = w.sorted[j];
            dst.reserve(sample.size());
            for (auto r : order)
                if (in_sample_[r]) dst.push_back(r);
        }
        for (auto r : sample) {
            w.g += grad_[r];
            w.h += hess_[r];
        }
        w.count = sample.size();
        return w;
    }

    // Best split over active features; ties keep the lowest feature index,
    // then the lowest threshold.
    SplitCandidate find_best(const Work& w) const {
        SplitCandidate best;
        const std::size_t msl = static_cast<std::size_t>(cfg_.min_samples_leaf);
        if (w.count < 2 * msl) return best;
        for (std::size_t j = 0; j < features_.size(); ++j) {
            const std::size_t f = features_[j];
            const auto& order = w.sorted[j];
            double gl = 0, hl = 0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                const auto r = order[i];
                gl += grad_[r];
                hl += hess_[r];
                const std::size_t nl = i + 1;
                const std::size_t nr = order.size() - nl;
                if (nl < msl) continue;
                if (nr < msl) break;
                const double a = x(f, r), b = x(f, order[i + 1]);
                if (!(b > a)) continue;
                const double gain = split_gain(gl, hl, w.g - gl, w.h - hl, cfg_.l2_reg);
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<int>(f);
                    best.threshold = midpoint(a, b);
                }
            }
        }
        return best;
    }

    std::pair<Work, Work> partition(Work& w, const SplitCandidate& s) {
        const auto f = static_cast<std::size_t>(s.feature);
        for (auto r : w.sorted[0]) goes_left_[r] = x(f, r) < s.threshold ? 1 : 0;
        Work l, r;
        l.sorted.resize(features_.size());
        r.sorted.resize(features_.size());
        for (std::size_t j = 0; j < features_.size(); ++j) {
            for (auto row : w.sorted[j]) (goes_left_[row] ? l.sorted[j] : r.sorted[j]).push_back(row);
        }
        for (auto row : l.sorted[0]) {
            l.g += grad_[row];
            l.h += hess_[row];
        }
        l.count = l.sorted[0].size();
        r.g = w.g - l.g;
        r.h = w.h - l.h;
        r.count = r.sorted[0].size();
        l.depth = r.depth = w.depth + 1;
        w.sorted.clear();
        w.sorted.shrink_to_fit();
        return {std::move(l), std::move(r)};
    }

    int add_node(Tree& t, double g, double h) {
        Node n;
        n.value = leaf_value(g, h);
        t.nodes.push_back(n);
        return static_cast<int>(t.nodes.size() - 1);
    }

    void attach(Tree& t, Work& parent, Work& l, Work& r, const SplitCandidate& s) {
        l.node = add_node(t, l.g, l.h);
        r.node = add_node(t, r.g, r.h);
        auto& p = t.nodes[static_cast<std::size_t>(parent.node)];
        p.feature = s.feature;
        p.threshold = s.threshold;
        p.left = l.node;
        p.right = r.node;
    }

    Tree build_leafwise(const std::vector<std::uint32_t>& sample) {
        Tree t;
        std::vector<Work> leaves;
        leaves.push_back(make_root(sample));
        leaves[0].node = add_node(t, leaves[0].g, leaves[0].h);
        leaves[0].best = find_best(leaves[0]);
        std::size_t num_leaves = 1;
        while (num_leaves < static_cast<std::size_t>(cfg_.max_leaves)) {
            // Highest gain wins; ties go to the earliest created leaf.
            std::size_t pick = leaves.size();
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                const auto& w = leaves[i];
                if (!w.best.valid() || !(w.best.gain > 0.0)) continue;
                if (cfg_.max_depth > 0 && w.depth >= static_cast<std::size_t>(cfg_.max_depth)) continue;
                if (pick == leaves.size() || w.best.gain > leaves[pick].best.gain) pick = i;
            }
            if (pick == leaves.size()) break;
            Work w = std::move(leaves[pick]);
            leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
            auto [l, r] = partition(w, w.best);
            attach(t, w, l, r, w.best);
            l.best = find_best(l);
            r.best = find_best(r);
            leaves.push_back(std::move(l));
            leaves.push_back(std::move(r));
            ++num_leaves;
        }
        return t;
    }

    // Level-wise growth followed by bottom-up pruning: a split survives when
    // its gain plus the gain of its surviving descendants is positive. This
    // lets a zero-gain split stand when the level below it pays off (XOR).
    Tree build_depthwise(const std::vector<std::uint32_t>& sample) {
        Tree t;
        std::vector<double> gains;
        std::vector<Work> level;
        level.push_back(make_root(sample));
        level[0].node = add_node(t, level[0].g, level[0].h);
        gains.push_back(0.0);
        std::size_t num_leaves = 1;
        for (int depth = 0; depth < cfg_.max_depth && !level.empty(); ++depth) {
            std::vector<Work> next;
            for (auto& w : level) {
                if (num_leaves >= static_cast<std::size_t>(cfg_.max_leaves)) break;
                const auto s = find_best(w);
                if (!s.valid()) continue;
                auto [l, r] = partition(w, s);
                attach(t, w, l, r, s);
                gains[static_cast<std::size_t>(w.node)] = s.gain;
                gains.push_back(0.0);
                gains.push_back(0.0);
                ++num_leaves;
                next.push_back(std::move(l));
                next.push_back(std::move(r));
            }
            level = std::move(next);
        }
        prune(t, 0, gains);
        return compact(t);
    }

    double prune(Tree& t, std::size_t i, const std::vector<double>& gains) {
        auto& n = t.nodes[i];
        if (n.is_leaf()) return 0.0;
        const double total = gains[i] + prune(t, static_cast<std::size_t>(n.left), gains) + prune(t, static_cast<std::size_t>(n.right), gains);
        if (total > 0.0) return total;
        t.nodes[i].feature = -1;
        t.nodes[i].threshold = 0.0;
        t.nodes[i].left = t.nodes[i].right = -1;
        return 0.0;
    }

    static Tree compact(const Tree& t) {
        Tree out;
        out.nodes.push_back(t.nodes[0]);
        std::vector<std::size_t> queue{0};
        std::vector<int> remap(t.nodes.size(), -1);
        remap[0] = 0;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const auto old = queue[qi];
            const auto& n = t.nodes[old];
            if (n.is_leaf()) continue;
            for (int child : {n.left, n.right}) {
                remap[static_cast<std::size_t>(child)] = static_cast<int>(out.nodes.size());
                out.nodes.push_back(t.nodes[static_cast<std::size_t>(child)]);
                queue.push_back(static_cast<std::size_t>(child));
            }
            auto& nn = out.nodes[static_cast<std::size_t>(remap[old])];
            nn.left = remap[static_cast<std::size_t>(n.left)];
            nn.right = remap[static_cast<std::size_t>(n.right)];
        }
        return out;
    }

    // Every splitting node of a level shares one (feature, threshold). Nodes
    // for which that split is invalid or has non-positive gain stay leaves.
    Tree build_oblivious(const std::vector<std::uint32_t>& sample) {
        Tree t;
        Work root = make_root(sample);
        std::vector<int> node_of(rows_, -1);
        for (auto r : sample) node_of[r] = 0;
        t.nodes.push_back(Node{});
        t.nodes[0].value = leaf_value(root.g, root.h);
        std::vector<int> active{0};
        const auto msl = static_cast<std::size_t>(cfg_.min_samples_leaf);

        std::vector<double> node_g(1, root.g), node_h(1, root.h);
        std::vector<std::size_t> node_n(1, root.count);
        std::size_t num_leaves = 1;

        for (int depth = 0; depth < cfg_.max_depth && !active.empty(); ++depth) {
            // slot[node] -> index into active accumulators
            std::vector<int> slot(t.nodes.size(), -1);
            for (std::size_t a = 0; a < active.size(); ++a) slot[static_cast<std::size_t>(active[a])] = static_cast<int>(a);
            std::vector<double> gl(active.size()), hl(active.size()), contrib(active.size());
            std::vector<std::size_t> nl(active.size());

            auto node_contrib = [&](std::size_t a) {
                const auto node = static_cast<std::size_t>(active[a]);
                const std::size_t left_n = nl[a], right_n = node_n[node] - nl[a];
                if (left_n < msl || right_n < msl || left_n == 0 || right_n == 0) return 0.0;
                const double g = split_gain(gl[a], hl[a], node_g[node] - gl[a], node_h[node] - hl[a], cfg_.l2_reg);
                return g > 0.0 ? g : 0.0;
            };

            double best_score = 0.0;
            int best_feature = -1;
            double best_threshold = 0.0;
            for (std::size_t j = 0; j < features_.size(); ++j) {
                const std::size_t f = features_[j];
                std::fill(gl.begin(), gl.end(), 0.0);
                std::fill(hl.begin(), hl.end(), 0.0);
                std::fill(nl.begin(), nl.end(), 0);
                std::fill(contrib.begin(), contrib.end(), 0.0);
                double score = 0.0;
                const auto& order = root.sorted[j];
                for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                    const auto r = order[i];
                    const int s = slot[static_cast<std::size_t>(node_of[r])];
                    if (s >= 0) {
                        const auto a = static_cast<std::size_t>(s);
                        gl[a] += grad_[r];
                        hl[a] += hess_[r];
                        ++nl[a];
                        const double c = node_contrib(a);
                        score += c - contrib[a];
                        contrib[a] = c;
                    }
                    const double va = x(f, r), vb = x(f, order[i + 1]);
                    if (!(vb > va)) continue;
                    if (score > best_score) {
                        best_score = score;
                        best_feature = static_cast<int>(f);
                        best_threshold = midpoint(va, vb);
                    }
                }
            }
            if (best_feature < 0) break;

            // Recompute per-node statistics for the chosen split exactly.
            const auto bf = static_cast<std::size_t>(best_feature);
            std::fill(gl.begin(), gl.end(), 0.0);
            std::fill(hl.begin(), hl.end(), 0.0);
            std::fill(nl.begin(), nl.end(), 0);
            for (auto r : sample) {
                const int s = slot[static_cast<std::size_t>(node_of[r])];
                if (s < 0 || !(x(bf, r) < best_threshold)) continue;
                gl[static_cast<std::size_t>(s)] += grad_[r];
                hl[static_cast<std::size_t>(s)] += hess_[r];
                ++nl[static_cast<std::size_t>(s)];
            }
            std::vector<int> next_active;
            for (std::size_t a = 0; a < active.size(); ++a) {
                if (num_leaves >= static_cast<std::size_t>(cfg_.max_leaves)) break;
                if (!(node_contrib(a) > 0.0)) continue;
                const auto node = static_cast<std::size_t>(active[a]);
                const double lg = gl[a], lh = hl[a], rg = node_g[node] - gl[a], rh = node_h[node] - hl[a];
                const int li = static_cast<int>(t.nodes.size());
                t.nodes.push_back(Node{-1, 0.0, -1, -1, leaf_value(lg, lh)});
                const int ri = static_cast<int>(t.nodes.size());
                t.nodes.push_back(Node{-1, 0.0, -1, -1, leaf_value(rg, rh)});
                t.nodes[node].feature = best_feature;
                t.nodes[node].threshold = best_threshold;
                t.nodes[node].left = li;
                t.nodes[node].right = ri;
                node_g.push_back(lg);
                node_h.push_back(lh);
                node_n.push_back(nl[a]);
                node_g.push_back(rg);
                node_h.push_back(rh);
                node_n.push_back(node_n[node] - nl[a]);
                next_active.push_back(li);
                next_active.push_back(ri);
                ++num_leaves;
            }
            if (next_active.empty()) break;
            for (auto r : sample) {
                const auto node = static_cast<std::size_t>(node_of[r]);
                const auto& n = t.nodes[node];
                if (n.is_leaf()) continue;
                if (slot[node] >= 0) node_of[r] = x(bf, r) < best_threshold ? n.left : n.right;
            }
            active = std::move(next_active);
        }
        return t;
    }

    const std::vector<double>& cols_;
    std::size_t rows_;
    const std::vector<std::vector<std::uint32_t>>& presorted_;
    const Config& cfg_;
    std::span<const double> grad_, hess_;
    std::vector<std::size_t> features_;
    std::vector<char> in_sample_;
    std::vector<char> goes_left_;
};

inline void check_training_input(const FeatureMatrix& x, std::span<const std::uint8_t> y) {
    if (x.rows() == 0) throw Error(ErrorKind::Training, "training set is empty");
    if (y.size() != x.rows())
        throw Error(ErrorKind::Arity, std::to_string(y.size()) + " labels for " + std::to_string(x.rows()) + " rows");
    for (double v : x.data())
        if (!std::isfinite(v)) throw Error(ErrorKind::Data, "non-finite feature value");
    for (auto v : y)
        if (v > 1) throw Error(ErrorKind::Data, "labels must be 0/1");
}

}  // namespace detail

/// Trains one binary model. `loss_trace`, when given, receives the training
/// log loss after each boosting round.
inline Model train(const FeatureMatrix& x, std::span<const std::uint8_t> y, const Config& cfg,
                   std::vector<double>* loss_trace = nullptr) {
    cfg.validate();
    detail::check_training_input(x, y);
    const std::size_t n = x.rows(), d = x.cols();

    std::size_t positives = 0;
    for (auto v : y) positives += v;
    const double rate = static_cast<double>(positives) / static_cast<double>(n);
    Model model = constant_model(d, rate);
    if (positives == 0 || positives == n) {
        warn("training labels are all " + std::string(positives == 0 ? "0" : "1") + "; model is base score only");
        if (loss_trace) {
            std::vector<double> m(n, model.base_score);
            loss_trace->assign(static_cast<std::size_t>(cfg.rounds), margin_log_loss(m, y));
        }
        return model;
    }

    std::vector<double> columns(n * d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) columns[c * n + r] = x.at(r, c);
    std::vector<std::vector<std::uint32_t>> presorted(d);
    for (std::size_t c = 0; c < d; ++c) {
        auto& idx = presorted[c];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0u);
        const double* col = &columns[c * n];
        std::stable_sort(idx.begin(), idx.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }

    Rng rng(cfg.seed);
    std::vector<double> margins(n, model.base_score), grad(n), hess(n);
    std::vector<std::uint32_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0u);
    std::vector<std::size_t> all_features(d);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});
    const auto row_count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.row_subsample * static_cast<double>(n))));
    const auto feat_count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.feature_subsample * static_cast<double>(d))));

    detail::TreeBuilder builder(columns, n, presorted, cfg);
    if (loss_trace) loss_trace->clear();
    for (int round = 0; round < cfg.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margins[i]);
            grad[i] = p - static_cast<double>(y[i]);
            hess[i] = p * (1.0 - p);
        }
        std::vector<std::uint32_t> sample = all_rows;
        if (row_count < n) {
            for (std::size_t i = 0; i < row_count; ++i) std::swap(sample[i], sample[i + rng.below(n - i)]);
            sample.resize(row_count);
            std::sort(sample.begin(), sample.end());
        }
        std::vector<std::size_t> features = all_features;
        if (feat_count < d) {
            for (std::size_t i = 0; i < feat_count; ++i) std::swap(features[i], features[i + rng.below(d - i)]);
            features.resize(feat_count);
            std::sort(features.begin(), features.end());
        }
        Tree tree = builder.build(grad, hess, sample, features);
        std::vector<double> row_buf(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) row_buf[c] = columns[c * n + i];
            margins[i] += tree.evaluate(row_buf);
        }
        model.trees.push_back(std::move(tree));
        if (loss_trace) loss_trace->push_back(margin_log_loss(margins, y));
    }
    return model;
}

/// One five-type model group per configuration; predictions average the
/// groups' per-type probabilities.
struct Ensemble {
    std::vector<std::string> names;
    std::vector<std::array<Model, kNumTypes>> groups;

    std::size_t num_features() const { return groups.empty() ? 0 : groups.front()[0].num_features; }

    ProbVector predict(std::span<const double> x) const {
        if (groups.empty()) throw Error(ErrorKind::Configuration, "ensemble has no model groups");
        ProbVector out;
        for (const auto& g : groups)
            for (std::size_t k = 0; k < kNumTypes; ++k) out[k] += gbdt::predict(g[k], x);
        for (std::size_t k = 0; k < kNumTypes; ++k) out[k] /= static_cast<double>(groups.size());
        return out;
    }

    friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

inline std::vector<std::uint8_t> type_column(const std::vector<TypeFlags>& labels, std::size_t k) {
    std::vector<std::uint8_t> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i][k] ? 1 : 0;
    return y;
}

inline Ensemble train_ensemble(const FeatureMatrix& x, const std::vector<TypeFlags>& labels, std::span<const Config> configs) {
    if (configs.empty()) throw Error(ErrorKind::Configuration, "at least one gbdt config is required");
    Ensemble e;
    for (const auto& cfg : configs) {
        std::array<Model, kNumTypes> group;
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            Config c = cfg;
            c.seed = derive_seed(cfg.seed, k);
            group[k] = train(x, type_column(labels, k), c);
        }
        e.names.push_back(cfg.name);
        e.groups.push_back(std::move(group));
    }
    return e;
}

// ---------------------------------------------------------------------------
// Text persistence. Doubles use the shortest round-trip representation, so a
// write/read cycle is bit-exact.

inline void write_model(std::ostream& out, const Model& m) {
    out << "gbdt-model 1\n";
    out << "num_features " << m.num_features << '\n';
    out << "base_score " << format_double(m.base_score) << '\n';
    out << "num_trees " << m.trees.size() << '\n';
    for (const auto& t : m.trees) {
        out << "tree " << t.nodes.size() << '\n';
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                out << "leaf " << format_double(n.value) << '\n';
            else
                out << "split " << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
                    << format_double(n.value) << '\n';
        }
    }
}

namespace detail {

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw Error(ErrorKind::Format, "unexpected end of model text");
        return w;
    }
    void expect(std::string_view w) {
        const auto got = word();
        if (got != w) throw Error(ErrorKind::Format, "expected '" + std::string(w) + "', found '" + got + "'");
    }
    double real() { return parse_double(word()); }
    long long integer() { return parse_int(word()); }

private:
    std::istream& in_;
};

}  // namespace detail

inline Model read_model(std::istream& in) {
    detail::TokenReader r(in);
    r.expect("gbdt-model");
    if (r.integer() != 1) throw Error(ErrorKind::Format, "unsupported gbdt-model version");
    Model m;
    r.expect("num_features");
    m.num_features = static_cast<std::size_t>(r.integer());
    r.expect("base_score");
    m.base_score = r.real();
    r.expect("num_trees");
    const auto trees = r.integer();
    for (long long t = 0; t < trees; ++t) {
        r.expect("tree");
        const auto count = r.integer();
        if (count < 1) throw Error(ErrorKind::Format, "tree with no nodes");
        Tree tree;
        for (long long i = 0; i < count; ++i) {
            Node n;
            const auto kind = r.word();
            if (kind == "leaf") {
                n.value = r.real();
            } else if (kind == "split") {
                n.feature = static_cast<int>(r.integer());
                n.threshold = r.real();
                n.left = static_cast<int>(r.integer());
                n.right = static_cast<int>(r.integer());
                n.value = r.real();
                if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.num_features || n.left <= i || n.right <= i ||
                    n.left >= count || n.right >= count)
                    throw Error(ErrorKind::Format, "malformed split node");
            } else {
                throw Error(ErrorKind::Format, "unknown node kind '" + kind + "'");
            }
            if (!std::isfinite(n.value)) throw Error(ErrorKind::Format, "non-finite leaf value");
            tree.nodes.push_back(n);
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

inline void write_ensemble(std::ostream& out, const Ensemble& e) {
    out << "gbdt-ensemble 1\n";
    out << "groups " << e.groups.size() << '\n';
    for (std::size_t g = 0; g < e.groups.size(); ++g) {
        out << "group " << e.names[g] << '\n';
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            out << "type " << kTypeKeys[k] << '\n';
            write_model(out, e.groups[g][k]);
        }
    }
    out << "end-ensemble\n";
}

inline Ensemble read_ensemble(std::istream& in) {
    detail::TokenReader r(in);
    r.expect("gbdt-ensemble");
    if (r.integer() != 1) throw Error(ErrorKind::Format, "unsupported gbdt-ensemble version");
    r.expect("groups");
    const auto groups = r.integer();
    Ensemble e;
    for (long long g = 0; g < groups; ++g) {
        r.expect("group");
        e.names.push_back(r.word());
        std::array<Model, kNumTypes> group;
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            r.expect("type");
            r.expect(kTypeKeys[k]);
            group[k] = read_model(in);
        }
        e.groups.push_back(std::move(group));
    }
    r.expect("end-ensemble");
    for (const auto& g : e.groups)
        for (const auto& m : g)
            if (m.num_features != e.num_features()) throw Error(ErrorKind::Format, "ensemble members disagree on feature count");
    return e;
}

inline std::string to_text(const Ensemble& e) {
    std::ostringstream ss;
    write_ensemble(ss, e);
    return ss.str();
}

}  // namespace ichtriage::gbdt
