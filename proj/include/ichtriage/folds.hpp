#pragma once

// Patient-grouped stratified k-fold assignment and out-of-fold slice
// predictions.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/io.hpp"
#include "ichtriage/slicemodel.hpp"
#include "ichtriage/volume.hpp"

namespace ichtriage {

inline constexpr int kDefaultFolds = 8;

struct FoldEntry {
    std::string patient_id;
    int fold = 0;

    friend bool operator==(const FoldEntry&, const FoldEntry&) = default;
};

struct FoldAssignment {
    int k = 0;
    std::map<std::string, FoldEntry> scans;  // keyed by scan_id

    int fold_of(const std::string& scan_id) const {
        auto it = scans.find(scan_id);
        if (it == scans.end()) throw Error(ErrorKind::Data, "scan '" + scan_id + "' has no fold assignment");
        return it->second.fold;
    }

    void validate() const {
        if (k < 2) throw Error(ErrorKind::Configuration, "fold count must be at least 2");
        std::map<std::string, int> patient_fold;
        for (const auto& [id, e] : scans) {
            if (e.fold < 0 || e.fold >= k) throw Error(ErrorKind::Data, "fold index out of range for scan '" + id + "'");
            auto [it, fresh] = patient_fold.emplace(e.patient_id, e.fold);
            if (!fresh && it->second != e.fold)
                throw Error(ErrorKind::Data, "patient '" + e.patient_id + "' is split across folds");
        }
    }

    friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

namespace detail {

struct PatientGroup {
    std::string patient_id;
    std::vector<std::string> scans;
    std::array<double, kNumLabels> positives{};
};

}  // namespace detail

/// Greedy multi-label group stratification. Groups are ordered by their
/// positive counts with the rarest label compared first, then each goes to
/// the fold whose normalized squared imbalance grows least.
inline FoldAssignment assign_folds(std::span<const ManifestRow> rows, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorKind::Configuration, "fold count must be at least 2, got " + std::to_string(k));
    std::map<std::string, detail::PatientGroup> by_patient;
    for (const auto& r : rows) {
        auto& g = by_patient[r.patient_id];
        g.patient_id = r.patient_id;
        g.scans.push_back(r.scan_id);
        for (std::size_t t = 0; t < kNumTypes; ++t) g.positives[t] += r.labels[t];
        g.positives[kAnyLabel] += r.any();
    }
    if (static_cast<std::size_t>(k) > by_patient.size())
        throw Error(ErrorKind::Infeasible, std::to_string(k) + " folds requested but only " + std::to_string(by_patient.size()) +
                                               " patient groups exist");

    std::vector<detail::PatientGroup> groups;
    groups.reserve(by_patient.size());
    for (auto& [_, g] : by_patient) groups.push_back(std::move(g));

    std::array<double, kNumLabels> totals{};
    double total_scans = 0.0;
    for (const auto& g : groups) {
        for (std::size_t l = 0; l < kNumLabels; ++l) totals[l] += g.positives[l];
        total_scans += static_cast<double>(g.scans.size());
    }
    std::array<std::size_t, kNumLabels> rarity;
    std::iota(rarity.begin(), rarity.end(), 0);
    std::stable_sort(rarity.begin(), rarity.end(), [&](std::size_t a, std::size_t b) { return totals[a] < totals[b]; });

    Rng rng(seed);
    rng.shuffle(groups);
    std::stable_sort(groups.begin(), groups.end(), [&](const auto& a, const auto& b) {
        for (std::size_t l : rarity)
            if (a.positives[l] != b.positives[l]) return a.positives[l] > b.positives[l];
        return a.scans.size() > b.scans.size();
    });

    const double kd = static_cast<double>(k);
    std::vector<std::array<double, kNumLabels>> counts(k);
    std::vector<double> sizes(k, 0.0);
    FoldAssignment out;
    out.k = k;
    for (const auto& g : groups) {
        int best = 0;
        double best_delta = 0.0;
        for (int f = 0; f < k; ++f) {
            double delta = 0.0;
            for (std::size_t l = 0; l < kNumLabels; ++l) {
                if (totals[l] == 0.0) continue;
                const double target = totals[l] / kd;
                const double before = counts[f][l] - target;
                const double after = before + g.positives[l];
                delta += (after * after - before * before) / target;
            }
            const double target = total_scans / kd;
            const double before = sizes[f] - target;
            const double after = before + static_cast<double>(g.scans.size());
            delta += (after * after - before * before) / target;
            if (f == 0 || delta < best_delta) {
                best = f;
                best_delta = delta;
            }
        }
        for (std::size_t l = 0; l < kNumLabels; ++l) counts[best][l] += g.positives[l];
        sizes[best] += static_cast<double>(g.scans.size());
        for (const auto& s : g.scans) {
            if (out.scans.count(s)) throw Error(ErrorKind::Data, "duplicate scan_id '" + s + "'");
            out.scans[s] = FoldEntry{g.patient_id, best};
        }
    }
    return out;
}

inline std::string encode_folds(const FoldAssignment& a) {
    io::CsvWriter w{"scan_id", "patient_id", "fold"};
    for (const auto& [id, e] : a.scans) w.row(std::vector<std::string>{id, e.patient_id, std::to_string(e.fold)});
    return w.str();
}

inline FoldAssignment parse_folds(const io::CsvTable& t) {
    t.require({"scan_id", "patient_id", "fold"});
    FoldAssignment a;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto fold = parse_int(t.cell(i, "fold"));
        if (fold < 0) throw Error(ErrorKind::Data, t.origin() + ": negative fold index");
        auto [_, fresh] = a.scans.emplace(t.cell(i, "scan_id"), FoldEntry{t.cell(i, "patient_id"), static_cast<int>(fold)});
        if (!fresh) throw Error(ErrorKind::Data, t.origin() + ": duplicate scan_id '" + t.cell(i, "scan_id") + "'");
        a.k = std::max(a.k, static_cast<int>(fold) + 1);
    }
    a.validate();
    return a;
}

inline FoldAssignment load_folds(const std::filesystem::path& path) { return parse_folds(io::CsvTable::load(path)); }

// ---------------------------------------------------------------------------

/// Trains a slice classifier from the given training volumes. Must be
/// deterministic; the fold index is passed for seeding.
using TrainProcedure = std::function<ClassifierPtr(std::span<const CtVolume* const> training, int fold)>;

inline TrainProcedure reference_train_procedure(gbdt::Config config, WindowTriple windows) {
    return [config, windows](std::span<const CtVolume* const> training, int fold) -> ClassifierPtr {
        const auto set = build_slice_training_set(training, windows);
        auto c = config;
        c.seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(fold));
        return std::make_shared<ReferenceClassifier>(train_reference_classifier(set.features, set.labels, c));
    };
}

/// Out-of-fold per-slice probabilities, in input volume order. Each fold's
/// model is trained on every other fold; warnings raised while training are
/// prefixed with the fold index.
inline std::vector<ScanProbabilities> generate_oof(std::span<const CtVolume> volumes, const FoldAssignment& folds,
                                                   const TrainProcedure& train, std::span<const WindowSpec> windows) {
    folds.validate();
    std::vector<int> fold_of(volumes.size());
    for (std::size_t i = 0; i < volumes.size(); ++i) fold_of[i] = folds.fold_of(volumes[i].scan_id);

    std::vector<ScanProbabilities> out(volumes.size());
    for (int f = 0; f < folds.k; ++f) {
        std::vector<const CtVolume*> training;
        bool any_held_out = false;
        for (std::size_t i = 0; i < volumes.size(); ++i) {
            if (fold_of[i] == f)
                any_held_out = true;
            else
                training.push_back(&volumes[i]);
        }
        if (!any_held_out) continue;
        if (training.empty()) throw Error(ErrorKind::Training, "fold " + std::to_string(f) + " leaves no training scans");

        ClassifierPtr clf;
        {
            auto previous = set_warning_sink(nullptr);
            set_warning_sink([&](const std::string& m) {
                if (previous) previous("fold " + std::to_string(f) + ": " + m);
            });
            try {
                clf = train(training, f);
            } catch (...) {
                set_warning_sink(previous);
                throw;
            }
            set_warning_sink(previous);
        }
        const std::vector<ClassifierPtr> one{clf};
        for (std::size_t i = 0; i < volumes.size(); ++i)
            if (fold_of[i] == f) out[i] = ScanProbabilities{volumes[i].scan_id, predict_slices(volumes[i], one, windows)};
    }
    return out;
}

}  // namespace ichtriage
