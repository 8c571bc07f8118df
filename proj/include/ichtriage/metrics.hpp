#pragma once

// Evaluation statistics: confusion matrices and the derived rates, ROC/AUC,
// log loss, normal-approximation binomial intervals, cumulative positive-case
// curves and box-plot summaries.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/io.hpp"

namespace ichtriage::metrics {

using Binary = std::vector<std::uint8_t>;

struct ConfusionMatrix {
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;

    std::int64_t total() const { return tp + fn + tn + fp; }
    std::int64_t positives() const { return tp + fn; }
    std::int64_t negatives() const { return tn + fp; }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix compute_confusion(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> truths) {
    if (decisions.size() != truths.size())
        throw Error(ErrorKind::Arity, std::to_string(decisions.size()) + " decisions vs " + std::to_string(truths.size()) + " truths");
    if (decisions.empty()) throw Error(ErrorKind::Arity, "confusion matrix needs at least one case");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const bool d = decisions[i] != 0, t = truths[i] != 0;
        if (d && t) ++cm.tp;
        else if (!d && t) ++cm.fn;
        else if (!d && !t) ++cm.tn;
        else ++cm.fp;
    }
    return cm;
}

/// A statistic whose denominator may vanish; undefined values stay empty.
using Stat = std::optional<double>;

struct Statistics {
    Stat sen, spec, ppv, npv, acc, bacc, mcc, f1;
};

inline Stat ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

// (sen + spec) / 2 as one correctly rounded quotient of exact integers.
inline Stat balanced_accuracy(const ConfusionMatrix& cm) {
    const double tp = static_cast<double>(cm.tp), fn = static_cast<double>(cm.fn);
    const double tn = static_cast<double>(cm.tn), fp = static_cast<double>(cm.fp);
    if (cm.positives() == 0 || cm.negatives() == 0) return std::nullopt;
    return (tp * (tn + fp) + tn * (tp + fn)) / (2.0 * (tp + fn) * (tn + fp));
}

inline Statistics compute_metrics(const ConfusionMatrix& cm) {
    if (cm.total() < 1) throw Error(ErrorKind::Arity, "confusion matrix is empty");
    const double tp = static_cast<double>(cm.tp), fn = static_cast<double>(cm.fn);
    const double tn = static_cast<double>(cm.tn), fp = static_cast<double>(cm.fp);
    Statistics s;
    s.sen = ratio(tp, tp + fn);
    s.spec = ratio(tn, tn + fp);
    s.ppv = ratio(tp, tp + fp);
    s.npv = ratio(tn, tn + fn);
    s.acc = ratio(tp + tn, static_cast<double>(cm.total()));
    s.bacc = balanced_accuracy(cm);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den > 0.0) s.mcc = (tp * tn - fp * fn) / std::sqrt(den);
    s.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
    return s;
}

// ---------------------------------------------------------------------------

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct AucResult {
    double auc = 0.0;
    std::vector<RocPoint> roc;  // starts at (0,0), ends at (1,1)
};

/// Mann-Whitney AUC (ties count one half) plus the ROC polyline with one
/// vertex per distinct score.
inline AucResult compute_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorKind::Arity, "scores and labels differ in length");
    std::int64_t pos = 0, neg = 0;
    for (auto l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0) throw Error(ErrorKind::UndefinedAuc, "AUC needs at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    AucResult out;
    out.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    // Pairs counted twice over so ties stay integral.
    std::int64_t doubled_wins = 0, tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::int64_t gp = 0, gn = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? gp : gn)++;
            ++j;
        }
        // Positives in this group beat every negative not yet seen, tie the group's negatives.
        doubled_wins += gp * (2 * (neg - fp - gn) + gn);
        tp += gp;
        fp += gn;
        out.roc.push_back({scores[order[i]], static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
        i = j;
    }
    out.auc = static_cast<double>(doubled_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return out;
}

inline constexpr double kLogLossClip = 1e-15;

inline double log_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels) {
    if (probabilities.size() != labels.size()) throw Error(ErrorKind::Arity, "probabilities and labels differ in length");
    if (probabilities.empty()) throw Error(ErrorKind::Arity, "log loss needs at least one case");
    double s = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = clip(probabilities[i], kLogLossClip, 1.0 - kLogLossClip);
        s += labels[i] ? std::log(p) : std::log1p(-p);
    }
    return -s / static_cast<double>(probabilities.size());
}

/// Half-width of the normal-approximation interval z * sqrt(p (1 - p) / n).
inline double binomial_ci(double p, std::int64_t n, double z = 1.96) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Data, "proportion outside [0,1]");
    if (n < 1) throw Error(ErrorKind::Data, "sample count must be positive");
    return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

struct CumulativeCurves {
    std::vector<std::int64_t> truth;
    std::vector<std::int64_t> decision;
    std::int64_t final_difference = 0;  // decision - truth at the last index, = fp - fn
    std::int64_t max_abs_divergence = 0;
    std::int64_t disagreements = 0;  // fp + fn
};

inline CumulativeCurves cumulative_curves(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> truths,
                                          std::span<const std::size_t> order = {}) {
    if (decisions.size() != truths.size()) throw Error(ErrorKind::Arity, "decisions and truths differ in length");
    std::vector<std::size_t> idx;
    if (order.empty()) {
        idx.resize(decisions.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
    } else {
        if (order.size() != decisions.size()) throw Error(ErrorKind::Arity, "order length differs from case count");
        idx.assign(order.begin(), order.end());
        std::vector<char> seen(idx.size(), 0);
        for (auto i : idx) {
            if (i >= idx.size() || seen[i]) throw Error(ErrorKind::Data, "order is not a permutation");
            seen[i] = 1;
        }
    }
    CumulativeCurves c;
    std::int64_t t = 0, d = 0;
    for (auto i : idx) {
        t += truths[i] ? 1 : 0;
        d += decisions[i] ? 1 : 0;
        if ((truths[i] != 0) != (decisions[i] != 0)) ++c.disagreements;
        c.truth.push_back(t);
        c.decision.push_back(d);
        c.max_abs_divergence = std::max(c.max_abs_divergence, std::abs(d - t));
    }
    c.final_difference = d - t;
    return c;
}

struct BoxStats {
    std::size_t count = 0;
    double median = 0, q1 = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0;
    std::vector<double> outliers;
};

inline double sorted_quantile(std::span<const double> sorted, double q) {
    const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

/// Quartiles by linear interpolation; whiskers reach the most extreme values
/// inside [Q1 - 1.5 IQR, Q3 + 1.5 IQR], the rest are outliers.
inline BoxStats boxplot_stats(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorKind::Data, "box plot group is empty");
    std::sort(values.begin(), values.end());
    BoxStats b;
    b.count = values.size();
    b.q1 = sorted_quantile(values, 0.25);
    b.median = sorted_quantile(values, 0.5);
    b.q3 = sorted_quantile(values, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    bool have_low = false;
    for (double v : values) {
        if (v < lo_fence || v > hi_fence) {
            b.outliers.push_back(v);
            continue;
        }
        if (!have_low) {
            b.whisker_low = v;
            have_low = true;
        }
        b.whisker_high = v;
    }
    return b;
}

struct GroupedBoxStats {
    BoxStats negative;
    BoxStats positive;
};

inline GroupedBoxStats boxplot_by_truth(std::span<const double> values, std::span<const std::uint8_t> truths) {
    if (values.size() != truths.size()) throw Error(ErrorKind::Arity, "values and truths differ in length");
    std::vector<double> neg, pos;
    for (std::size_t i = 0; i < values.size(); ++i) (truths[i] ? pos : neg).push_back(values[i]);
    return {boxplot_stats(std::move(neg)), boxplot_stats(std::move(pos))};
}

// ---------------------------------------------------------------------------
// Reporting.

/// Percent with one decimal, rounded half away from zero via hundredths of a
/// percent first (the convention the published tables follow).
inline std::int64_t percent_tenths(double fraction) {
    const std::int64_t hundredths = std::llround(fraction * 10000.0);
    const std::int64_t mag = (std::abs(hundredths) + 5) / 10;
    return hundredths < 0 ? -mag : mag;
}

inline double round_percent(double fraction) { return static_cast<double>(percent_tenths(fraction)) / 10.0; }

inline std::string format_percent(const Stat& s) {
    if (!s) return "NA";
    const auto t = percent_tenths(*s);
    const auto mag = std::abs(t);
    return std::string(t < 0 ? "-" : "") + std::to_string(mag / 10) + "." + std::to_string(mag % 10);
}

struct LabelReport {
    std::string label;
    ConfusionMatrix cm;
    Statistics stats;
    Stat auc;
    Stat acc_ci, bacc_ci;
};

inline LabelReport make_label_report(std::string label, const ConfusionMatrix& cm, Stat auc = std::nullopt) {
    LabelReport r;
    r.label = std::move(label);
    r.cm = cm;
    r.stats = compute_metrics(cm);
    r.auc = auc;
    if (r.stats.acc) r.acc_ci = binomial_ci(*r.stats.acc, cm.total());
    if (r.stats.bacc) r.bacc_ci = binomial_ci(*r.stats.bacc, cm.total());
    return r;
}

/// CSV in the published tables' column order; rates in percent.
inline std::string report_csv(std::span<const LabelReport> rows) {
    io::CsvWriter w{"Hemorrhage", "TP", "FN", "TN", "FP", "SEN", "SPEC", "PPV", "NPV", "AUC", "Acc", "BAcc", "MCC", "F1"};
    for (const auto& r : rows) {
        const auto& s = r.stats;
        w.row(std::vector<std::string>{r.label, std::to_string(r.cm.tp), std::to_string(r.cm.fn), std::to_string(r.cm.tn),
                                       std::to_string(r.cm.fp), format_percent(s.sen), format_percent(s.spec),
                                       format_percent(s.ppv), format_percent(s.npv), format_percent(r.auc),
                                       format_percent(s.acc), format_percent(s.bacc), format_percent(s.mcc),
                                       format_percent(s.f1)});
    }
    return w.str();
}

inline std::string stat_text(const Stat& s) { return s ? format_double(*s) : "undefined"; }

inline std::string report_text(std::span<const LabelReport> rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        const auto& s = r.stats;
        const std::string p = r.label + ".";
        out << p << "tp = " << r.cm.tp << '\n' << p << "fn = " << r.cm.fn << '\n';
        out << p << "tn = " << r.cm.tn << '\n' << p << "fp = " << r.cm.fp << '\n';
        out << p << "total = " << r.cm.total() << '\n';
        out << p << "sen = " << stat_text(s.sen) << '\n' << p << "spec = " << stat_text(s.spec) << '\n';
        out << p << "ppv = " << stat_text(s.ppv) << '\n' << p << "npv = " << stat_text(s.npv) << '\n';
        out << p << "auc = " << stat_text(r.auc) << '\n';
        out << p << "acc = " << stat_text(s.acc) << '\n' << p << "bacc = " << stat_text(s.bacc) << '\n';
        out << p << "mcc = " << stat_text(s.mcc) << '\n' << p << "f1 = " << stat_text(s.f1) << '\n';
        out << p << "acc_ci_half_width = " << stat_text(r.acc_ci) << '\n';
        out << p << "bacc_ci_half_width = " << stat_text(r.bacc_ci) << '\n';
    }
    return out.str();
}

}  // namespace ichtriage::metrics
