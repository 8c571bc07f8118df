#pragma once

// Sliding-window inter-slice meta-features and the boosted stacking ensemble
// that refines each slice's probability vector.

#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/gbdt.hpp"
#include "ichtriage/slicemodel.hpp"
#include "ichtriage/volume.hpp"

namespace ichtriage {

inline constexpr int kDefaultDeltaS = 2;
inline constexpr int kMaxDeltaS = 5;

inline void validate_delta_s(int delta_s) {
    if (delta_s < 0 || delta_s > kMaxDeltaS)
        throw Error(ErrorKind::Configuration, "delta-s must be in [0, 5], got " + std::to_string(delta_s));
}

inline std::size_t window_width(int delta_s) { return kNumTypes * (2 * static_cast<std::size_t>(delta_s) + 1); }

struct MetaFeatureRow {
    std::string scan_id;
    std::size_t slice = 0;
    std::vector<double> values;  // p_{n-ds}, ..., p_{n+ds}
};

/// Windows of 2*delta_s+1 neighbouring vectors; indices outside the scan are
/// clamped to the first or last slice.
inline std::vector<MetaFeatureRow> build_windows(const std::string& scan_id, std::span<const ProbVector> rows, int delta_s) {
    validate_delta_s(delta_s);
    if (rows.empty()) throw Error(ErrorKind::EmptyVolume, "scan '" + scan_id + "' has no probability rows");
    const auto n = static_cast<long long>(rows.size());
    std::vector<MetaFeatureRow> out(rows.size());
    for (long long i = 0; i < n; ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        r.scan_id = scan_id;
        r.slice = static_cast<std::size_t>(i);
        r.values.reserve(window_width(delta_s));
        for (long long d = -delta_s; d <= delta_s; ++d) {
            const auto j = static_cast<std::size_t>(std::clamp(i + d, 0LL, n - 1));
            r.values.insert(r.values.end(), rows[j].p.begin(), rows[j].p.end());
        }
    }
    return out;
}

struct StackerModel {
    int delta_s = kDefaultDeltaS;
    gbdt::Ensemble ensemble;

    friend bool operator==(const StackerModel&, const StackerModel&) = default;
};

inline StackerModel train_stacker(std::span<const ScanProbabilities> oof, std::span<const ScanLabels> labels, int delta_s,
                                  std::span<const gbdt::Config> configs) {
    validate_delta_s(delta_s);
    if (oof.size() != labels.size()) throw Error(ErrorKind::Arity, "stacker needs one label record per scan");
    if (oof.empty()) throw Error(ErrorKind::Training, "stacker training set is empty");
    gbdt::FeatureMatrix x;
    std::vector<TypeFlags> y;
    std::size_t broadcast = 0;
    for (std::size_t s = 0; s < oof.size(); ++s) {
        const auto& scan = oof[s];
        const auto& l = labels[s];
        if (l.slices && l.slices->size() != scan.rows.size())
            throw Error(ErrorKind::Data, "scan '" + scan.scan_id + "' has " + std::to_string(scan.rows.size()) +
                                             " probability rows but " + std::to_string(l.slices->size()) + " slice labels");
        if (!l.slices) ++broadcast;
        const auto windows = build_windows(scan.scan_id, scan.rows, delta_s);
        for (std::size_t n = 0; n < windows.size(); ++n) {
            x.push_row(windows[n].values);
            y.push_back(l.slices ? (*l.slices)[n] : l.scan);
        }
    }
    if (broadcast)
        warn(std::to_string(broadcast) + " scans have scan-level labels only; broadcasting each scan label to all its slices");
    return StackerModel{delta_s, gbdt::train_ensemble(x, y, configs)};
}

inline std::vector<ProbVector> apply_stacker(const StackerModel& model, std::span<const ProbVector> rows, int delta_s,
                                             const std::string& scan_id = "scan") {
    if (delta_s != model.delta_s)
        throw Error(ErrorKind::Configuration, "delta-s " + std::to_string(delta_s) + " does not match the stacker's trained delta-s " +
                                                  std::to_string(model.delta_s));
    if (model.ensemble.num_features() != window_width(delta_s))
        throw Error(ErrorKind::Configuration, "stacker ensemble feature count does not match its delta-s");
    const auto windows = build_windows(scan_id, rows, delta_s);
    std::vector<ProbVector> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(model.ensemble.predict(w.values));
    return out;
}

inline std::vector<ScanProbabilities> apply_stacker(const StackerModel& model, std::span<const ScanProbabilities> scans, int delta_s) {
    std::vector<ScanProbabilities> out;
    out.reserve(scans.size());
    for (const auto& s : scans) out.push_back({s.scan_id, apply_stacker(model, s.rows, delta_s, s.scan_id)});
    return out;
}

inline std::string encode_stacker(const StackerModel& m) {
    std::ostringstream out;
    out << "stacker 1\ndelta_s " << m.delta_s << '\n';
    gbdt::write_ensemble(out, m.ensemble);
    out << "end-stacker\n";
    return out.str();
}

inline StackerModel decode_stacker(const std::string& text) {
    std::istringstream in(text);
    gbdt::detail::TokenReader r(in);
    r.expect("stacker");
    if (r.integer() != 1) throw Error(ErrorKind::Format, "unsupported stacker version");
    r.expect("delta_s");
    StackerModel m;
    m.delta_s = static_cast<int>(r.integer());
    validate_delta_s(m.delta_s);
    m.ensemble = gbdt::read_ensemble(in);
    r.expect("end-stacker");
    if (m.ensemble.num_features() != window_width(m.delta_s))
        throw Error(ErrorKind::Format, "stacker ensemble feature count does not match its delta-s");
    return m;
}

}  // namespace ichtriage
