#pragma once

// Independent reference computations used only by tests. Nothing here may
// call into the code path it is checking.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

// AUC by counting every positive/negative pair: win = 1, tie = 1/2.
// Returns the doubled win count and the pair count so callers can compare
// exact rationals.
struct PairCount {
    std::int64_t doubled_wins = 0;
    std::int64_t pairs = 0;
    double auc() const { return static_cast<double>(doubled_wins) / (2.0 * static_cast<double>(pairs)); }
};

inline PairCount brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    PairCount pc;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pc.pairs;
            if (scores[i] > scores[j])
                pc.doubled_wins += 2;
            else if (scores[i] == scores[j])
                pc.doubled_wins += 1;
        }
    }
    return pc;
}

// Margin after `rounds` Newton steps on a point that sits alone in its leaf:
// m += lr * (1 - p) / (p (1 - p) + lambda), starting from margin 0.
inline double isolated_point_margin(int rounds, double lr, double lambda) {
    double m = 0.0;
    for (int t = 0; t < rounds; ++t) {
        const double p = 1.0 / (1.0 + std::exp(-m));
        m += lr * (1.0 - p) / (p * (1.0 - p) + lambda);
    }
    return m;
}

inline double logistic_loss_at_margin(double m) { return std::log1p(std::exp(-m)); }

// Coordinate-wise grid search over thresholds {0.01, ..., 1.00}^5 starting
// at 0.5 on every axis; sweeps until a full pass changes nothing.
struct GridResult {
    std::array<double, 5> thresholds{};
    double objective = 0.0;
};

inline GridResult coordinate_grid_search(const std::function<double(const std::array<double, 5>&)>& objective) {
    GridResult best;
    best.thresholds.fill(0.5);
    best.objective = objective(best.thresholds);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t axis = 0; axis < 5; ++axis) {
            for (int step = 1; step <= 100; ++step) {
                auto t = best.thresholds;
                t[axis] = step / 100.0;
                const double v = objective(t);
                if (v > best.objective) {
                    best.objective = v;
                    best.thresholds = t;
                    changed = true;
                }
            }
        }
    }
    return best;
}

// Quartile by linear interpolation at position (k - 1) q of the sorted data.
inline double interpolated_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace oracle
