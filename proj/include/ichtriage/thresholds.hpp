#pragma once

// Per-type decision thresholds, slice-to-scan aggregation, and a Gaussian
// process threshold search.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/io.hpp"
#include "ichtriage/metrics.hpp"

namespace ichtriage {

struct ThresholdSet {
    std::array<double, kNumTypes> t{0.5, 0.5, 0.5, 0.5, 0.5};

    double operator[](std::size_t k) const { return t[k]; }
    double& operator[](std::size_t k) { return t[k]; }

    void validate() const {
        for (std::size_t k = 0; k < kNumTypes; ++k)
            if (!(t[k] > 0.0 && t[k] <= 1.0))
                throw Error(ErrorKind::Configuration, std::string(kTypeKeys[k]) + " threshold must be in (0, 1], got " + format_double(t[k]));
    }

    friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

inline constexpr ThresholdSet kPublishedThresholds{{0.47, 0.37, 0.45, 0.37, 0.20}};

inline std::string encode_thresholds(const ThresholdSet& t) {
    std::string out;
    for (std::size_t k = 0; k < kNumTypes; ++k) out += std::string(kTypeKeys[k]) + " = " + format_double(t[k]) + "\n";
    return out;
}

/// Five `key = value` lines; blank lines and `#` comments are ignored.
inline ThresholdSet parse_thresholds(std::string_view text, const std::string& origin = "thresholds") {
    ThresholdSet t;
    std::array<bool, kNumTypes> seen{};
    std::size_t line_no = 0;
    for (auto line : io::split(text, '\n')) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::Format, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto it = std::find(kTypeKeys.begin(), kTypeKeys.end(), key);
        if (it == kTypeKeys.end()) throw Error(ErrorKind::Format, origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        const auto k = static_cast<std::size_t>(it - kTypeKeys.begin());
        if (seen[k]) throw Error(ErrorKind::Format, origin + ": duplicate key '" + key + "'");
        seen[k] = true;
        t[k] = parse_double(trim(line.substr(eq + 1)));
    }
    for (std::size_t k = 0; k < kNumTypes; ++k)
        if (!seen[k]) throw Error(ErrorKind::Format, origin + ": missing key '" + std::string(kTypeKeys[k]) + "'");
    t.validate();
    return t;
}

inline ThresholdSet load_thresholds(const std::filesystem::path& path) { return parse_thresholds(io::read_file(path), path.string()); }

// ---------------------------------------------------------------------------

struct Decision {
    TypeFlags types{};
    bool any = false;

    friend bool operator==(const Decision&, const Decision&) = default;
};

inline Decision binarize_slice(const ProbVector& p, const ThresholdSet& t) {
    Decision d;
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        d.types[k] = p[k] >= t[k];
        d.any = d.any || d.types[k];
    }
    return d;
}

/// Per-type maximum over the slices of a scan.
inline ProbVector aggregate_scan(std::span<const ProbVector> rows) {
    if (rows.empty()) throw Error(ErrorKind::EmptyVolume, "cannot aggregate a scan with no slices");
    ProbVector out = rows.front();
    for (const auto& r : rows)
        for (std::size_t k = 0; k < kNumTypes; ++k) out[k] = std::max(out[k], r[k]);
    return out;
}

inline Decision scan_decision(std::span<const ProbVector> rows, const ThresholdSet& t) { return binarize_slice(aggregate_scan(rows), t); }

// ---------------------------------------------------------------------------
// Objectives.

enum class Objective { AnyBalancedAccuracy, MeanTypeBalancedAccuracy };

inline std::string to_string(Objective o) { return o == Objective::AnyBalancedAccuracy ? "any-bacc" : "type-bacc-mean"; }

inline Objective parse_objective(std::string_view s) {
    if (s == "any-bacc") return Objective::AnyBalancedAccuracy;
    if (s == "type-bacc-mean") return Objective::MeanTypeBalancedAccuracy;
    throw Error(ErrorKind::Configuration, "unknown objective '" + std::string(s) + "' (expected any-bacc or type-bacc-mean)");
}

/// Scan-level maxima and ground truth; the input to threshold search.
struct ScanScores {
    std::vector<ProbVector> scores;
    std::vector<TypeFlags> labels;
};

class ObjectiveFunction {
public:
    ObjectiveFunction(const ScanScores& data, Objective objective) : data_(data), objective_(objective) {
        if (data.scores.size() != data.labels.size()) throw Error(ErrorKind::Arity, "score and label counts differ");
        std::array<std::size_t, kNumLabels> pos{};
        for (const auto& l : data.labels) {
            bool any = false;
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                pos[k] += l[k];
                any = any || l[k];
            }
            pos[kAnyLabel] += any;
        }
        const auto n = data.labels.size();
        auto defined = [&](std::size_t l) { return pos[l] > 0 && pos[l] < n; };
        if (objective == Objective::AnyBalancedAccuracy) {
            if (!defined(kAnyLabel))
                throw Error(ErrorKind::UndefinedObjective, "any-ICH balanced accuracy needs at least one positive and one negative scan");
        } else {
            for (std::size_t k = 0; k < kNumTypes; ++k)
                if (defined(k)) types_.push_back(k);
            if (types_.empty())
                throw Error(ErrorKind::UndefinedObjective, "no hemorrhage type has both positive and negative scans");
            if (types_.size() < kNumTypes) warn("per-type objective averages only the types with both label values");
        }
    }

    double operator()(const ThresholdSet& t) const {
        std::array<metrics::ConfusionMatrix, kNumLabels> cm{};
        for (std::size_t i = 0; i < data_.scores.size(); ++i) {
            const auto d = binarize_slice(data_.scores[i], t);
            bool truth_any = false;
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                tally(cm[k], d.types[k], data_.labels[i][k]);
                truth_any = truth_any || data_.labels[i][k];
            }
            tally(cm[kAnyLabel], d.any, truth_any);
        }
        if (objective_ == Objective::AnyBalancedAccuracy) return *metrics::balanced_accuracy(cm[kAnyLabel]);
        double sum = 0.0;
        for (auto k : types_) sum += *metrics::balanced_accuracy(cm[k]);
        return sum / static_cast<double>(types_.size());
    }

private:
    static void tally(metrics::ConfusionMatrix& cm, bool decided, bool truth) {
        if (truth)
            ++(decided ? cm.tp : cm.fn);
        else
            ++(decided ? cm.fp : cm.tn);
    }

    const ScanScores& data_;
    Objective objective_;
    std::vector<std::size_t> types_;
};

// ---------------------------------------------------------------------------
// Gaussian process search with expected improvement.

struct OptimizerConfig {
    Objective objective = Objective::AnyBalancedAccuracy;
    int budget = 150;
    int initial_points = 20;
    double lower = 0.01;
    double upper = 1.0;
    double length_scale = 0.2;
    double noise = 1e-6;
    int random_candidates = 1000;
    int local_candidates = 1000;
    bool axis_candidates = true;
    int polish_evaluations = 60;
    double polish_fraction = 0.125;  // first polish stride, as a fraction of scans per type
    double neighbourhood = 1.0;  // side of the candidate box around the incumbent, in unit-cube coordinates
    std::uint64_t seed = 0;
};

struct Evaluation {
    ThresholdSet thresholds;
    double objective = 0.0;
};

struct OptimizationResult {
    ThresholdSet best;
    double objective = 0.0;
    std::vector<Evaluation> history;
};

namespace detail {

inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, out = 0.0;
    while (index > 0) {
        out += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return out;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

class GaussianProcess {
public:
    GaussianProcess(const std::vector<Evaluation>& history, double length_scale, double noise) : ell2_(length_scale * length_scale) {
        const auto n = static_cast<Eigen::Index>(history.size());
        x_.resize(n, kNumTypes);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < kNumTypes; ++k) x_(i, static_cast<Eigen::Index>(k)) = history[i].thresholds[k];
            y(i) = history[i].objective;
        }
        mean_ = y.mean();
        const double var = (y.array() - mean_).square().sum() / static_cast<double>(n);
        scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
        y = (y.array() - mean_) / scale_;

        Eigen::MatrixXd k = kernel(x_, x_);
        // Repeated points make the kernel singular; grow the jitter until it factors.
        for (double jitter = noise;; jitter *= 10.0) {
            llt_.compute(k + jitter * Eigen::MatrixXd::Identity(n, n));
            if (llt_.info() == Eigen::Success) break;
            if (jitter > 1.0) throw Error(ErrorKind::Training, "GP kernel matrix is not positive definite");
        }
        alpha_ = llt_.solve(y);
    }

    double standardize(double v) const { return (v - mean_) / scale_; }

    // Expected improvement over `best` (standardized) for every candidate column.
    Eigen::VectorXd expected_improvement(const Eigen::MatrixXd& candidates, double best) const {
        const Eigen::MatrixXd ks = kernel(x_, candidates);
        const Eigen::VectorXd mu = ks.transpose() * alpha_;
        const Eigen::MatrixXd v = llt_.matrixL().solve(ks);
        Eigen::VectorXd ei(candidates.rows());
        for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
            const double var = std::max(1.0 - v.col(j).squaredNorm(), 0.0);
            const double sd = std::sqrt(var);
            const double gain = mu(j) - best;
            if (sd < 1e-12) {
                ei(j) = std::max(gain, 0.0);
                continue;
            }
            const double z = gain / sd;
            ei(j) = gain * normal_cdf(z) + sd * normal_pdf(z);
        }
        return ei;
    }

private:
    Eigen::MatrixXd kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
        Eigen::MatrixXd k(a.rows(), b.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() / (2.0 * ell2_));
        return k;
    }

    double ell2_;
    double mean_ = 0.0, scale_ = 1.0;
    Eigen::MatrixXd x_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
};

// Representative thresholds for axis k, one per run of values that give the
// same decisions given the other axes: midpoints between consecutive scores
// whose decision on k still matters.
struct AxisPositions {
    std::vector<double> values;
    std::size_t current = 0;  // run holding t[k]
};

inline AxisPositions axis_positions(const ScanScores& data, const ThresholdSet& t, std::size_t k, Objective objective, double lower,
                                    double upper) {
    std::vector<double> e;
    for (const auto& p : data.scores) {
        if (!(p[k] > lower && p[k] <= upper)) continue;
        bool matters = true;
        if (objective == Objective::AnyBalancedAccuracy)
            for (std::size_t j = 0; j < kNumTypes && matters; ++j)
                if (j != k && p[j] >= t[j]) matters = false;
        if (matters) e.push_back(p[k]);
    }
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    AxisPositions out;
    out.values.push_back(lower);
    for (std::size_t i = 0; i + 1 < e.size(); ++i) out.values.push_back((e[i] + e[i + 1]) / 2.0);
    if (!e.empty() && e.back() < upper) out.values.push_back((e.back() + upper) / 2.0);
    out.current = std::min<std::size_t>(std::lower_bound(e.begin(), e.end(), t[k]) - e.begin(), out.values.size() - 1);
    return out;
}

// Coordinate search in units of decision-changing positions. The stride
// starts near polish_fraction of the scans per type and halves on failure;
// once single steps are exhausted it widens again to escape.
inline void breakpoint_polish(const ScanScores& data, const ObjectiveFunction& f, const OptimizerConfig& cfg, OptimizationResult& out) {
    std::set<std::array<double, kNumTypes>> visited;
    for (const auto& e : out.history) visited.insert(e.thresholds.t);
    auto exhausted = [&] { return static_cast<int>(out.history.size()) >= cfg.budget; };
    auto evaluate = [&](const ThresholdSet& t) {
        const double v = f(t);
        out.history.push_back({t, v});
        if (v > out.objective) {
            out.objective = v;
            out.best = t;
            return true;
        }
        return false;
    };
    const auto n = static_cast<double>(data.scores.size());
    const int start = std::max(1, static_cast<int>(std::lround(cfg.polish_fraction * n / kNumTypes)));
    int step = start, idle = 0;
    while (!exhausted() && idle < 64) {
        bool improved = false, fresh = false;
        for (std::size_t k = 0; k < kNumTypes && !improved && !exhausted(); ++k) {
            const auto ap = axis_positions(data, out.best, k, cfg.objective, cfg.lower, cfg.upper);
            const auto& pos = ap.values;
            const auto here = static_cast<long long>(ap.current);
            for (int dir : {1, -1}) {
                if (exhausted()) break;
                const long long j = std::clamp<long long>(here + dir * step, 0, static_cast<long long>(pos.size()) - 1);
                auto t = out.best;
                t[k] = pos[static_cast<std::size_t>(j)];
                if (!visited.insert(t.t).second) continue;
                fresh = true;
                if (evaluate(t)) {
                    improved = true;
                    break;
                }
            }
        }
        idle = fresh ? 0 : idle + 1;
        if (improved) continue;
        if (step > 1)
            step = std::max(1, step / 2);
        else if (!fresh)
            step = start * 2;
    }
}

}  // namespace detail

/// Maximizes the objective over [lower, upper]^5. The search starts from a
/// randomly shifted Halton design, then repeatedly evaluates the
/// expected-improvement maximizer among candidates drawn from a box around
/// the incumbent and along axis lines through it. The last
/// `polish_evaluations` go to a coordinate search over decision-changing
/// threshold positions. `budget` caps the number of objective evaluations,
/// including the initial design.
inline OptimizationResult optimize_thresholds(const ScanScores& data, const OptimizerConfig& cfg) {
    if (cfg.budget < 1) throw Error(ErrorKind::Configuration, "optimizer budget must be positive");
    if (!(cfg.lower > 0.0 && cfg.lower < cfg.upper && cfg.upper <= 1.0))
        throw Error(ErrorKind::Configuration, "threshold search bounds must satisfy 0 < lower < upper <= 1");
    const ObjectiveFunction f(data, cfg.objective);
    Rng rng(cfg.seed);

    OptimizationResult out;
    auto evaluate = [&](const std::array<double, kNumTypes>& x) {
        ThresholdSet t;
        for (std::size_t k = 0; k < kNumTypes; ++k) t[k] = std::clamp(x[k], cfg.lower, cfg.upper);
        const double v = f(t);
        out.history.push_back({t, v});
        if (out.history.size() == 1 || v > out.objective) {
            out.objective = v;
            out.best = t;
        }
    };

    constexpr std::array<std::uint64_t, kNumTypes> bases{2, 3, 5, 7, 11};
    std::array<double, kNumTypes> shift;
    for (auto& s : shift) s = rng.uniform();
    const int initial = std::min(cfg.initial_points, cfg.budget);
    const double span = cfg.upper - cfg.lower;
    for (int i = 1; i <= initial; ++i) {
        std::array<double, kNumTypes> x;
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            const double u = detail::radical_inverse(static_cast<std::uint64_t>(i), bases[k]) + shift[k];
            x[k] = cfg.lower + span * (u - std::floor(u));
        }
        evaluate(x);
    }

    constexpr int kAxisSteps = 100;
    const Eigen::Index axis_count = cfg.axis_candidates ? kAxisSteps * static_cast<Eigen::Index>(kNumTypes) : 0;
    const Eigen::Index m = cfg.random_candidates + cfg.local_candidates + axis_count;
    Eigen::MatrixXd candidates(m, kNumTypes);
    const double side = cfg.neighbourhood;
    const int polish = std::clamp(cfg.polish_evaluations, 0, std::max(0, cfg.budget - initial));
    while (static_cast<int>(out.history.size()) < cfg.budget - polish) {
        const detail::GaussianProcess gp(out.history, cfg.length_scale, cfg.noise);
        std::array<double, kNumTypes> lo, hi;
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            lo[k] = std::clamp(out.best[k] - side / 2, cfg.lower, cfg.upper);
            hi[k] = std::clamp(out.best[k] + side / 2, cfg.lower, cfg.upper);
        }
        Eigen::Index j = 0;
        auto put = [&](std::size_t k, double v) { candidates(j, static_cast<Eigen::Index>(k)) = v; };
        for (int i = 0; i < cfg.random_candidates; ++i, ++j)
            for (std::size_t k = 0; k < kNumTypes; ++k) put(k, lo[k] + (hi[k] - lo[k]) * rng.uniform());
        for (int i = 0; i < cfg.local_candidates; ++i, ++j) {
            // Wide and narrow moves, on one axis or on all of them.
            const double sigma = side * ((i % 2 == 0) ? 0.25 : 0.0625);
            const bool single_axis = (i % 4) >= 2;
            const auto axis = rng.below(kNumTypes);
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                double v = out.best[k];
                if (!single_axis || k == axis) v += sigma * rng.normal();
                put(k, std::clamp(v, lo[k], hi[k]));
            }
        }
        for (std::size_t axis = 0; axis < kNumTypes && cfg.axis_candidates; ++axis)
            for (int step = 0; step < kAxisSteps; ++step, ++j)
                for (std::size_t k = 0; k < kNumTypes; ++k)
                    put(k, k == axis ? cfg.lower + span * (static_cast<double>(step) + 0.5) / kAxisSteps : out.best[k]);

        const auto ei = gp.expected_improvement(candidates, gp.standardize(out.objective));
        Eigen::Index pick = 0;
        for (Eigen::Index c = 1; c < m; ++c)
            if (ei(c) > ei(pick)) pick = c;
        std::array<double, kNumTypes> x;
        for (std::size_t k = 0; k < kNumTypes; ++k) x[k] = candidates(pick, static_cast<Eigen::Index>(k));
        evaluate(x);
    }
    detail::breakpoint_polish(data, f, cfg, out);
    return out;
}

}  // namespace ichtriage
