// Acceptance run: one PASS/FAIL line per criterion with its wall time.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ichtriage/cli.hpp"
#include "ichtriage/folds.hpp"
#include "ichtriage/gbdt.hpp"
#include "ichtriage/metrics.hpp"
#include "ichtriage/stacker.hpp"
#include "ichtriage/synth.hpp"
#include "ichtriage/thresholds.hpp"
#include "oracles.hpp"
#include "published_tables.hpp"

using namespace ichtriage;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome table_replay() {
    int checked = 0;
    std::vector<std::string> misses;
    for (const auto& row : published::kRows) {
        const metrics::ConfusionMatrix cm{row.tp, row.fn, row.tn, row.fp};
        const auto s = metrics::compute_metrics(cm);
        const std::array<metrics::Stat, 8> got{s.sen, s.spec, s.ppv, s.npv, s.acc, s.bacc, s.mcc, s.f1};
        for (std::size_t c = 0; c < got.size(); ++c) {
            ++checked;
            const double rounded = got[c] ? metrics::round_percent(*got[c]) : -1.0;
            if (!got[c] || std::abs(rounded - row.percent[c]) > 0.05 + 1e-9)
                misses.push_back(std::string(row.table) + " " + std::string(row.label) + " " + std::string(published::kColumns[c]) + " " +
                                 fmt("%.1f", rounded) + " vs " + fmt("%.1f", row.percent[c]));
        }
    }
    std::string detail = std::to_string(checked - static_cast<int>(misses.size())) + "/" + std::to_string(checked) + " cells";
    for (const auto& m : misses) detail += "; miss: " + m;
    return {misses.empty(), detail};
}

Outcome ci_replay() {
    double worst = 0.0;
    for (const auto& r : published::kExternalIntervals) {
        const double hw = 100.0 * metrics::binomial_ci(r.bacc_percent / 100.0, published::kExternalCount);
        worst = std::max(worst, std::abs(hw - r.half_width_percent));
    }
    return {worst <= 0.01 + 1e-9, "6 half-widths, worst |diff| " + fmt("%.4f", worst) + " pp"};
}

Outcome auc_oracle() {
    Rng rng(2024);
    int exact = 0;
    double worst = 0.0;
    for (int set = 0; set < 1000; ++set) {
        const auto n = static_cast<std::size_t>(2 + rng.below(199));
        const auto levels = 2 + rng.below(30);  // few levels force ties
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        std::vector<std::uint8_t> bytes(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
            labels[i] = rng.uniform() < 0.4;
        }
        labels[0] = 1;
        labels[1] = 0;
        for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(labels[i]);
        const double got = metrics::compute_auc(scores, bytes).auc;
        const double want = oracle::brute_force_auc(scores, labels).auc();
        exact += got == want;
        worst = std::max(worst, std::abs(got - want));
    }
    return {worst < 1e-12, std::to_string(exact) + "/1000 bitwise equal, worst |diff| " + fmt("%.3g", worst)};
}

gbdt::FeatureMatrix noisy_features(std::size_t n, std::uint64_t seed, std::vector<std::uint8_t>& y) {
    Rng rng(seed);
    gbdt::FeatureMatrix x;
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 3> row{rng.uniform(), rng.uniform(), rng.normal()};
        x.push_row(row);
        y.push_back(2.0 * row[0] - row[1] + 0.3 * row[2] + 0.4 * rng.normal() > 0.4);
    }
    return x;
}

double log_loss_of(const gbdt::Model& m, const gbdt::FeatureMatrix& x, const std::vector<std::uint8_t>& y) {
    std::vector<double> p;
    for (std::size_t i = 0; i < x.rows(); ++i) p.push_back(gbdt::predict(m, x.row(i)));
    return metrics::log_loss(p, y);
}

Outcome gbdt_properties() {
    gbdt::FeatureMatrix xor_x;
    std::vector<std::uint8_t> xor_y;
    for (auto [a, b, l] : {std::tuple{0.0, 0.0, 0}, {0.0, 1.0, 1}, {1.0, 0.0, 1}, {1.0, 1.0, 0}}) {
        xor_x.push_row(std::array{a, b});
        xor_y.push_back(static_cast<std::uint8_t>(l));
    }
    gbdt::Config xc;
    xc.rounds = 50;
    xc.learning_rate = 1.0;
    xc.growth = gbdt::Growth::Depthwise;
    xc.max_depth = 2;
    xc.max_leaves = 4;
    xc.min_samples_leaf = 1;
    const double xor_loss = log_loss_of(gbdt::train(xor_x, xor_y, xc), xor_x, xor_y);

    bool monotone = true;
    for (auto growth : {gbdt::Growth::Leafwise, gbdt::Growth::Depthwise, gbdt::Growth::Oblivious}) {
        std::vector<std::uint8_t> y;
        const auto x = noisy_features(300, 5, y);
        gbdt::Config c;
        c.growth = growth;
        c.rounds = 80;
        c.learning_rate = 0.1;
        c.max_depth = growth == gbdt::Growth::Leafwise ? 0 : 4;
        c.max_leaves = 16;
        c.min_samples_leaf = 3;
        std::vector<double> trace;
        gbdt::train(x, y, c, &trace);
        for (std::size_t r = 1; r < trace.size(); ++r) monotone = monotone && trace[r] <= trace[r - 1] + 1e-12;
    }

    bool same = true;
    for (auto c : gbdt::default_presets(17)) {
        std::vector<std::uint8_t> y;
        const auto x = noisy_features(300, 6, y);
        c.rounds = 40;
        same = same && gbdt::train(x, y, c) == gbdt::train(x, y, c);
    }
    return {xor_loss < 0.05 && monotone && same, "XOR loss " + fmt("%.4f", xor_loss) + " (lr 1, depth 2, 50 rounds); monotone " +
                                                     (monotone ? "yes" : "no") + "; seeded repeat identical " + (same ? "yes" : "no")};
}

double any_auc(std::span<const ScanProbabilities> probs, std::span<const ScanLabels> labels) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto top = aggregate_scan(probs[i].rows);
        s.push_back(*std::max_element(top.p.begin(), top.p.end()));
        y.push_back(labels[i].any());
    }
    return metrics::compute_auc(s, y).auc;
}

// Shared by criteria 5 and 6: a stacker trained on one coherence phantom set.
const StackerModel& coherence_stacker() {
    static const StackerModel model = [] {
        synth::CoherenceConfig c;
        c.seed = 1;
        const auto train = synth::generate_probabilities(c);
        return train_stacker(train.probs, train.labels, 2, gbdt::default_presets(7));
    }();
    return model;
}

Outcome stacker_benefit() {
    synth::CoherenceConfig c;
    c.seed = 2;
    const auto test = synth::generate_probabilities(c);
    const auto stacked = apply_stacker(coherence_stacker(), test.probs, 2);
    const double raw = any_auc(test.probs, test.labels), refined = any_auc(stacked, test.labels);
    return {refined - raw >= 0.02, "300 train / 300 test scans, dS 2: raw AUC " + fmt("%.4f", raw) + ", stacked " + fmt("%.4f", refined) +
                                       ", gain " + fmt("%.4f", refined - raw)};
}

Outcome optimizer_vs_grid() {
    synth::CoherenceConfig c;
    c.num_scans = 200;
    c.seed = 3;
    const auto val = synth::generate_probabilities(c);
    const auto stacked = apply_stacker(coherence_stacker(), val.probs, 2);
    ScanScores data;
    for (std::size_t i = 0; i < stacked.size(); ++i) {
        data.scores.push_back(aggregate_scan(stacked[i].rows));
        data.labels.push_back(val.labels[i].scan);
    }
    bool pass = true;
    std::string detail = "200 stacked validation scans, budget 150:";
    for (auto obj : {Objective::AnyBalancedAccuracy, Objective::MeanTypeBalancedAccuracy}) {
        const ObjectiveFunction f(data, obj);
        const auto grid = oracle::coordinate_grid_search([&](const std::array<double, 5>& t) { return f(ThresholdSet{t}); });
        OptimizerConfig cfg;
        cfg.objective = obj;
        cfg.seed = 3;
        const auto res = optimize_thresholds(data, cfg);
        const double gap = res.objective - grid.objective;
        pass = pass && gap >= -0.005 - 1e-12 && res.history.size() <= 150;
        detail += " " + to_string(obj) + " opt " + fmt("%.4f", res.objective) + " grid " + fmt("%.4f", grid.objective) + " gap " +
                  fmt("%+.4f", gap) + ";";
    }
    return {pass, detail};
}

// Answers with the remembered labels of any slice it has seen pixel for pixel.
class Memorizer final : public SliceClassifier {
public:
    explicit Memorizer(std::map<std::vector<double>, TypeFlags> seen) : seen_(std::move(seen)) {}
    ProbVector classify(const ChannelImage& img) const override {
        ProbVector p;
        const auto ch = img.channel(2);
        auto it = seen_.find(std::vector<double>(ch.begin(), ch.end()));
        if (it != seen_.end())
            for (std::size_t k = 0; k < kNumTypes; ++k) p[k] = it->second[k];
        return p;
    }
    std::string identity() const override { return "memorizer"; }

private:
    std::map<std::vector<double>, TypeFlags> seen_;
};

ClassifierPtr memorize(std::span<const CtVolume* const> training) {
    std::map<std::vector<double>, TypeFlags> seen;
    for (const auto* v : training)
        for (std::size_t n = 0; n < v->num_slices(); ++n) {
            const auto ch = stack_channels(v->slice(n), kDefaultWindows).channel(2);
            seen[std::vector<double>(ch.begin(), ch.end())] = (*v->labels->slices)[n];
        }
    return std::make_shared<Memorizer>(std::move(seen));
}

double any_accuracy(std::span<const ScanProbabilities> probs, std::span<const CtVolume> vols) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < vols.size(); ++i) correct += scan_decision(probs[i].rows, ThresholdSet{{0.5, 0.5, 0.5, 0.5, 0.5}}).any == vols[i].labels->any();
    return static_cast<double>(correct) / static_cast<double>(vols.size());
}

Outcome leakage_sentinel() {
    // Every patient has two identical acquisitions under different scan ids.
    synth::SynthConfig sc;
    sc.num_scans = 30;
    sc.any_fraction = 0.5;
    sc.height = sc.width = 32;
    sc.min_lesion_pixels = 10;
    sc.repeat_patient_fraction = 0.0;
    sc.seed = 21;
    const auto ds = synth::generate(sc);
    std::vector<CtVolume> vols;
    std::vector<ManifestRow> rows;
    for (const auto& s : ds.scans)
        for (int copy = 0; copy < 2; ++copy) {
            CtVolume v = s.volume;
            v.scan_id += copy ? "b" : "a";
            vols.push_back(v);
            rows.push_back({v.scan_id, v.patient_id, "", v.labels->scan});
        }
    std::vector<const CtVolume*> all;
    for (const auto& v : vols) all.push_back(&v);
    const auto everything = memorize(all);
    std::vector<ScanProbabilities> in_fold;
    for (const auto& v : vols) in_fold.push_back({v.scan_id, predict_slices(v, std::span(&everything, 1), kDefaultWindows)});
    const double in_acc = any_accuracy(in_fold, vols);

    const auto folds = assign_folds(rows, 5, 21);
    const auto oof = generate_oof(vols, folds, [](std::span<const CtVolume* const> t, int) { return memorize(t); }, kDefaultWindows);
    const double oof_acc = any_accuracy(oof, vols);
    return {in_acc == 1.0 && oof_acc < 1.0, "60 scans / 30 patients: in-fold any-ICH accuracy " + fmt("%.4f", in_acc) + ", OOF " + fmt("%.4f", oof_acc)};
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ichtriage");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

bool pipeline(const fs::path& dir) {
    fs::remove_all(dir);
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> steps{
        {"synth", "--scans", "48", "--any-fraction", "0.5", "--seed", "101", "--out", p("train")},
        {"synth", "--scans", "30", "--any-fraction", "0.5", "--seed", "102", "--out", p("val")},
        {"synth", "--scans", "30", "--any-fraction", "0.5", "--seed", "103", "--out", p("test")},
        {"oof", "--manifest", p("train/manifest.csv"), "--slice-labels", p("train/slice_labels.csv"), "--k", "4", "--seed", "7", "--out", p("oof")},
        {"slice-train", "--manifest", p("train/manifest.csv"), "--slice-labels", p("train/slice_labels.csv"), "--seed", "7", "--out", p("slice.model")},
        {"stack-train", "--manifest", p("train/manifest.csv"), "--slice-labels", p("train/slice_labels.csv"), "--oof", p("oof/oof.csv"), "--seed", "7",
         "--out", p("stacker.model")},
        {"slice-predict", "--manifest", p("val/manifest.csv"), "--model", p("slice.model"), "--out", p("val_raw.csv")},
        {"stack-apply", "--model", p("stacker.model"), "--probs", p("val_raw.csv"), "--out", p("val_stacked.csv")},
        {"optimize", "--manifest", p("val/manifest.csv"), "--probs", p("val_stacked.csv"), "--seed", "7", "--out", p("thresholds.txt")},
        {"slice-predict", "--manifest", p("test/manifest.csv"), "--model", p("slice.model"), "--out", p("test_raw.csv")},
        {"stack-apply", "--model", p("stacker.model"), "--probs", p("test_raw.csv"), "--out", p("test_stacked.csv")},
        {"evaluate", "--manifest", p("test/manifest.csv"), "--probs", p("test_stacked.csv"), "--thresholds", p("thresholds.txt"), "--out", p("evaluation")},
        {"report", "--manifest", p("test/manifest.csv"), "--probs", p("test_stacked.csv"), "--thresholds", p("thresholds.txt"), "--out", p("report")},
    };
    for (const auto& s : steps)
        if (cli(s) != 0) return false;
    return true;
}

Outcome end_to_end_determinism() {
    const auto base = fs::temp_directory_path() / "ichtriage-acceptance";
    const auto a = base / "run-a", b = base / "run-b";
    if (!pipeline(a) || !pipeline(b)) return {false, "a pipeline command failed"};
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto other = b / fs::relative(e.path(), a);
        if (!fs::exists(other) || io::read_file(e.path()) != io::read_file(other)) ++differing;
    }
    std::size_t report_files = 0;
    for (const auto& e : fs::directory_iterator(a / "report")) report_files += e.is_regular_file();
    fs::remove_all(base);
    return {differing == 0 && report_files == 11, std::to_string(files) + " artifacts compared (" + std::to_string(report_files) +
                                                      " report files), " + std::to_string(differing) + " differ"};
}

Outcome decision_rule_equivalence() {
    Rng rng(77);
    std::size_t mismatches = 0;
    for (int scan = 0; scan < 1000; ++scan) {
        const auto n = 1 + rng.below(40);
        std::vector<ProbVector> rows(n);
        for (auto& r : rows)
            for (auto& v : r.p) v = static_cast<double>(rng.below(101)) / 100.0;
        ThresholdSet t;
        for (std::size_t k = 0; k < kNumTypes; ++k) t[k] = static_cast<double>(1 + rng.below(100)) / 100.0;
        Decision ored;
        for (const auto& r : rows) {
            const auto d = binarize_slice(r, t);
            for (std::size_t k = 0; k < kNumTypes; ++k) ored.types[k] = ored.types[k] || d.types[k];
            ored.any = ored.any || d.any;
        }
        mismatches += !(ored == scan_decision(rows, t));
    }
    return {mismatches == 0, "1000 scans, " + std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main() {
    set_warning_sink([](const std::string&) {});
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "table replay", 1, table_replay},
        {2, "CI replay", 1, ci_replay},
        {3, "AUC oracle", 10, auc_oracle},
        {4, "GBDT properties", 30, gbdt_properties},
        {5, "stacker benefit", 300, stacker_benefit},
        {6, "threshold optimizer vs grid", 120, optimizer_vs_grid},
        {7, "leakage sentinel", 60, leakage_sentinel},
        {8, "end-to-end determinism", 600, end_to_end_determinism},
        {9, "decision-rule equivalence", 5, decision_rule_equivalence},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.limit_s;
        failures += !pass;
        std::printf("criterion %d %-28s %s  %.2f s (limit %.0f s)  %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs, c.limit_s, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
