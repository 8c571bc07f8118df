#pragma once

// Command-line pipeline: synth, slice-train, slice-predict, oof, stack-train,
// stack-apply, optimize, evaluate and report. Every command stages its outputs
// and renames them into place only after all of them were produced.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ichtriage/folds.hpp"
#include "ichtriage/metrics.hpp"
#include "ichtriage/slicemodel.hpp"
#include "ichtriage/stacker.hpp"
#include "ichtriage/svg.hpp"
#include "ichtriage/synth.hpp"
#include "ichtriage/thresholds.hpp"
#include "ichtriage/volume.hpp"

namespace ichtriage::cli {

namespace fs = std::filesystem;

struct Options {
    std::string manifest, volumes, slice_labels, probs, oof, thresholds, decisions, folds, out, windows;
    std::vector<std::string> models;
    std::string objective = "any-bacc";
    int delta_s = kDefaultDeltaS;
    int budget = 150;
    int k = kDefaultFolds;
    std::uint64_t seed = 0;
    // synth
    std::size_t scans = 40;
    double any_fraction = 0.4;
    std::size_t size = 64;
    double repeat_fraction = 0.2;
};

namespace detail {

/// "c:w,c:w,c:w"; empty selects the default brain, subdural and soft-tissue windows.
inline WindowTriple parse_windows(const std::string& text) {
    if (text.empty()) return kDefaultWindows;
    const auto parts = io::split(text, ',');
    if (parts.size() != 3) throw Error(ErrorKind::Arity, "--windows needs three center:width pairs, got '" + text + "'");
    WindowTriple w;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto cw = io::split(parts[i], ':');
        if (cw.size() != 2) throw Error(ErrorKind::Format, "window '" + parts[i] + "' is not center:width");
        w[i] = {parse_double(cw[0]), parse_double(cw[1])};
        validate_window(w[i]);
    }
    return w;
}

inline void require(const std::string& value, const char* flag) {
    if (value.empty()) throw Error(ErrorKind::Configuration, std::string("missing required ") + flag);
}

inline void require_file(const std::string& path, const char* flag) {
    require(path, flag);
    if (!fs::is_regular_file(path)) throw Error(ErrorKind::Io, std::string(flag) + " '" + path + "' does not exist");
}

inline std::vector<ManifestRow> manifest(const Options& o) {
    require_file(o.manifest, "--manifest");
    return load_manifest(o.manifest);
}

inline std::optional<SliceLabelMap> slice_label_map(const Options& o) {
    if (o.slice_labels.empty()) return std::nullopt;
    require_file(o.slice_labels, "--slice-labels");
    return parse_slice_labels(io::CsvTable::load(o.slice_labels));
}

/// Volume paths resolve against --volumes, else the manifest's directory.
inline std::vector<CtVolume> volumes(const Options& o, const std::vector<ManifestRow>& rows) {
    const fs::path base = o.volumes.empty() ? fs::path(o.manifest).parent_path() : fs::path(o.volumes);
    if (!base.empty() && !fs::is_directory(base)) throw Error(ErrorKind::Io, "volume directory '" + base.string() + "' does not exist");
    const auto labels = slice_label_map(o);
    return load_dataset(rows, base, labels ? &*labels : nullptr);
}

/// Reorders per-scan records into manifest order; both sides must name the same scans.
template <typename T, typename IdOf>
std::vector<T> align(const std::vector<ManifestRow>& rows, std::vector<T> items, IdOf id_of, const std::string& what) {
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!where.emplace(id_of(items[i]), i).second) throw Error(ErrorKind::Data, what + " lists scan '" + id_of(items[i]) + "' twice");
    std::vector<T> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        auto it = where.find(r.scan_id);
        if (it == where.end()) throw Error(ErrorKind::Data, what + " has no entry for manifest scan '" + r.scan_id + "'");
        out.push_back(std::move(items[it->second]));
        where.erase(it);
    }
    if (!where.empty()) throw Error(ErrorKind::Data, what + " has scan '" + where.begin()->first + "' missing from the manifest");
    return out;
}

inline std::vector<ScanProbabilities> aligned_probs(const std::vector<ManifestRow>& rows, const std::string& path, const char* flag) {
    require_file(path, flag);
    return align(rows, load_slice_probabilities(path), [](const ScanProbabilities& s) { return s.scan_id; }, path);
}

inline std::vector<ScanLabels> scan_labels(const Options& o, const std::vector<ManifestRow>& rows, std::span<const ScanProbabilities> probs) {
    const auto map = slice_label_map(o);
    std::vector<ScanLabels> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ScanLabels l;
        l.scan = rows[i].labels;
        if (map) {
            auto it = map->find(rows[i].scan_id);
            if (it != map->end()) l.slices = it->second;
        }
        l.validate(probs[i].rows.size());
        out.push_back(std::move(l));
    }
    return out;
}

// Per-label columns in manifest order; index kAnyLabel is any-ICH.
struct Evaluation {
    std::vector<std::string> ids;
    std::array<metrics::Binary, kNumLabels> truth, decision;
    std::optional<std::array<std::vector<double>, kNumLabels>> scores;
    std::vector<metrics::LabelReport> reports;
};

struct DecisionRow {
    std::string scan_id;
    TypeFlags types{};
    bool any = false;
};

/// scan_id, d_edh..d_iph and an optional d_any (defaults to the OR of the types).
inline std::vector<DecisionRow> load_decisions(const std::string& path) {
    const auto t = io::CsvTable::load(path);
    t.require({"scan_id", "d_edh", "d_sdh", "d_sah", "d_ivh", "d_iph"});
    const bool has_any = t.has("d_any");
    std::vector<DecisionRow> out;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        DecisionRow d;
        d.scan_id = t.cell(i, "scan_id");
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            d.types[k] = parse_flag(t.cell(i, "d_" + std::string(kTypeKeys[k])));
            d.any = d.any || d.types[k];
        }
        if (has_any) d.any = parse_flag(t.cell(i, "d_any"));
        out.push_back(std::move(d));
    }
    return out;
}

inline Evaluation evaluate(const Options& o, bool need_scores) {
    const auto rows = manifest(o);
    Evaluation e;
    for (const auto& r : rows) {
        e.ids.push_back(r.scan_id);
        for (std::size_t k = 0; k < kNumTypes; ++k) e.truth[k].push_back(r.labels[k]);
        e.truth[kAnyLabel].push_back(r.any());
    }
    const bool from_probs = !o.probs.empty() || !o.thresholds.empty();
    if (from_probs && !o.decisions.empty()) throw Error(ErrorKind::Configuration, "give either --probs with --thresholds or --decisions");
    if (from_probs || need_scores) {
        require_file(o.thresholds, "--thresholds");
        const auto probs = aligned_probs(rows, o.probs, "--probs");
        const auto t = load_thresholds(o.thresholds);
        e.scores.emplace();
        for (const auto& s : probs) {
            const auto top = aggregate_scan(s.rows);
            const auto d = binarize_slice(top, t);
            double any = 0.0;
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                (*e.scores)[k].push_back(top[k]);
                e.decision[k].push_back(d.types[k]);
                any = std::max(any, top[k]);
            }
            (*e.scores)[kAnyLabel].push_back(any);
            e.decision[kAnyLabel].push_back(d.any);
        }
    } else {
        if (o.decisions.empty()) throw Error(ErrorKind::Configuration, "evaluate needs --probs with --thresholds, or --decisions");
        require_file(o.decisions, "--decisions");
        for (const auto& d : align(rows, load_decisions(o.decisions), [](const DecisionRow& r) { return r.scan_id; }, o.decisions)) {
            for (std::size_t k = 0; k < kNumTypes; ++k) e.decision[k].push_back(d.types[k]);
            e.decision[kAnyLabel].push_back(d.any);
        }
    }
    for (std::size_t l = 0; l < kNumLabels; ++l) {
        metrics::Stat auc;
        if (e.scores) {
            try {
                auc = metrics::compute_auc((*e.scores)[l], e.truth[l]).auc;
            } catch (const Error& err) {
                if (err.kind() != ErrorKind::UndefinedAuc) throw;
            }
        }
        e.reports.push_back(metrics::make_label_report(std::string(kLabelNames[l]), metrics::compute_confusion(e.decision[l], e.truth[l]), auc));
    }
    return e;
}

inline std::string stat_cell(const metrics::Stat& s) { return s ? format_double(*s) : "NA"; }

inline std::string decisions_csv(const Evaluation& e) {
    io::CsvWriter w{"scan_id", "d_edh", "d_sdh", "d_sah", "d_ivh", "d_iph", "d_any"};
    for (std::size_t i = 0; i < e.ids.size(); ++i) {
        std::vector<std::string> cells{e.ids[i]};
        for (std::size_t l = 0; l < kNumLabels; ++l) cells.push_back(e.decision[l][i] ? "1" : "0");
        w.row(cells);
    }
    return w.str();
}

inline void stage_metrics(io::AtomicOutputs& out, const fs::path& dir, const Evaluation& e) {
    out.stage(dir / "metrics.csv", metrics::report_csv(e.reports));
    out.stage(dir / "metrics.txt", metrics::report_text(e.reports));
}

inline void stage_roc(io::AtomicOutputs& out, const fs::path& dir, const Evaluation& e) {
    io::CsvWriter w{"label", "threshold", "fpr", "tpr"};
    std::vector<svg::Series> series;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
        if (!e.reports[l].auc) continue;
        const auto roc = metrics::compute_auc((*e.scores)[l], e.truth[l]).roc;
        svg::Series s{std::string(kLabelNames[l]) + " " + metrics::format_percent(e.reports[l].auc), {}, static_cast<int>(l)};
        for (const auto& p : roc) {
            w.row(std::vector<std::string>{std::string(kLabelNames[l]), std::isinf(p.threshold) ? "inf" : format_double(p.threshold),
                                           format_double(p.fpr), format_double(p.tpr)});
            s.points.emplace_back(p.fpr, p.tpr);
        }
        series.push_back(std::move(s));
    }
    out.stage(dir / "roc.csv", w.str());
    out.stage(dir / "roc.svg", svg::line_plot({"ROC curves (AUC %)", "False positive rate", "True positive rate"}, series, true));
}

inline void stage_cumulative(io::AtomicOutputs& out, const fs::path& dir, const Evaluation& e) {
    io::CsvWriter w{"label", "position", "scan_id", "truth", "decision"};
    io::CsvWriter summary{"label", "final_difference", "max_abs_divergence", "disagreements"};
    std::vector<svg::Series> series;
    double top = 1.0;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
        const auto c = metrics::cumulative_curves(e.decision[l], e.truth[l]);
        const std::string name(kLabelNames[l]);
        svg::Series truth{name + " truth", {{0.0, 0.0}}, static_cast<int>(l)};
        svg::Series model{name + " model", {{0.0, 0.0}}, static_cast<int>(l), true};
        for (std::size_t i = 0; i < c.truth.size(); ++i) {
            w.row(std::vector<std::string>{name, std::to_string(i + 1), e.ids[i], std::to_string(c.truth[i]), std::to_string(c.decision[i])});
            truth.points.emplace_back(static_cast<double>(i + 1), static_cast<double>(c.truth[i]));
            model.points.emplace_back(static_cast<double>(i + 1), static_cast<double>(c.decision[i]));
            top = std::max({top, static_cast<double>(c.truth[i]), static_cast<double>(c.decision[i])});
        }
        summary.row(std::vector<std::string>{name, std::to_string(c.final_difference), std::to_string(c.max_abs_divergence),
                                             std::to_string(c.disagreements)});
        series.push_back(std::move(truth));
        series.push_back(std::move(model));
    }
    out.stage(dir / "cumulative.csv", w.str());
    out.stage(dir / "cumulative_summary.csv", summary.str());
    const svg::Axes axes{"Cumulative positives, truth (solid) vs model (dashed)", "Scans in manifest order", "Cumulative positives", 0.0,
                         static_cast<double>(std::max<std::size_t>(e.ids.size(), 1)), 0.0, top};
    out.stage(dir / "cumulative.svg", svg::line_plot(axes, series));
}

inline void stage_boxplot(io::AtomicOutputs& out, const fs::path& dir, const Evaluation& e) {
    io::CsvWriter w{"label", "truth", "count", "q1", "median", "q3", "whisker_low", "whisker_high", "outliers"};
    std::vector<svg::Box> boxes;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
        const std::string name(kLabelNames[l]);
        for (int truth = 0; truth < 2; ++truth) {
            std::vector<double> values;
            for (std::size_t i = 0; i < e.ids.size(); ++i)
                if (e.truth[l][i] == truth) values.push_back((*e.scores)[l][i]);
            svg::Box box{name + (truth ? "+" : "-"), std::nullopt};
            if (values.empty()) {
                w.row(std::vector<std::string>{name, std::to_string(truth), "0", "NA", "NA", "NA", "NA", "NA", ""});
            } else {
                const auto b = metrics::boxplot_stats(std::move(values));
                std::string outliers;
                for (std::size_t i = 0; i < b.outliers.size(); ++i) outliers += (i ? " " : "") + format_double(b.outliers[i]);
                w.row(std::vector<std::string>{name, std::to_string(truth), std::to_string(b.count), format_double(b.q1), format_double(b.median),
                                               format_double(b.q3), format_double(b.whisker_low), format_double(b.whisker_high), outliers});
                box.stats = b;
            }
            boxes.push_back(std::move(box));
        }
    }
    out.stage(dir / "boxplot.csv", w.str());
    out.stage(dir / "boxplot.svg", svg::box_plot({"Scan scores by ground truth", "Label and truth class", "Scan score"}, boxes));
}

inline void stage_ci(io::AtomicOutputs& out, const fs::path& dir, const Evaluation& e) {
    io::CsvWriter w{"label", "n", "acc", "acc_half_width", "bacc", "bacc_half_width"};
    std::vector<svg::Interval> rows;
    for (const auto& r : e.reports) {
        w.row(std::vector<std::string>{r.label, std::to_string(r.cm.total()), stat_cell(r.stats.acc), stat_cell(r.acc_ci),
                                       stat_cell(r.stats.bacc), stat_cell(r.bacc_ci)});
        if (r.stats.bacc) rows.push_back({r.label, *r.stats.bacc, *r.bacc_ci});
    }
    out.stage(dir / "ci.csv", w.str());
    out.stage(dir / "ci.svg", svg::interval_plot({"Balanced accuracy with 95% intervals", "Label", "Balanced accuracy"}, rows));
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void cmd_synth(const Options& o) {
    detail::require(o.out, "--out");
    synth::SynthConfig cfg;
    cfg.num_scans = o.scans;
    cfg.any_fraction = o.any_fraction;
    cfg.height = cfg.width = o.size;
    cfg.repeat_patient_fraction = o.repeat_fraction;
    cfg.seed = o.seed;
    synth::write_dataset(synth::generate(cfg), o.out);
}

inline void cmd_slice_train(const Options& o) {
    detail::require(o.out, "--out");
    const auto windows = detail::parse_windows(o.windows);
    const auto vols = detail::volumes(o, detail::manifest(o));
    std::vector<const CtVolume*> ptrs;
    for (const auto& v : vols) ptrs.push_back(&v);
    const auto set = build_slice_training_set(ptrs, windows);
    const auto clf = train_reference_classifier(set.features, set.labels, default_reference_config(o.seed));
    io::AtomicOutputs out;
    out.stage(o.out, encode_reference_classifier(clf, windows));
    out.commit();
}

/// Probabilities averaged over every --model; all models must share windows.
inline void cmd_slice_predict(const Options& o) {
    detail::require(o.out, "--out");
    if (o.models.empty()) throw Error(ErrorKind::Configuration, "missing required --model");
    std::vector<ClassifierPtr> classifiers;
    std::vector<WindowSpec> windows;
    for (const auto& path : o.models) {
        detail::require_file(path, "--model");
        auto loaded = decode_reference_classifier(io::read_file(path));
        if (classifiers.empty()) {
            windows = loaded.windows;
        } else if (loaded.windows.size() != windows.size() ||
                   !std::equal(windows.begin(), windows.end(), loaded.windows.begin(),
                               [](const WindowSpec& a, const WindowSpec& b) { return a.center == b.center && a.width == b.width; })) {
            throw Error(ErrorKind::Configuration, "model '" + path + "' uses different windows from the first model");
        }
        classifiers.push_back(std::make_shared<ReferenceClassifier>(std::move(loaded.classifier)));
    }
    const auto vols = detail::volumes(o, detail::manifest(o));
    std::vector<ScanProbabilities> probs;
    for (const auto& v : vols) probs.push_back({v.scan_id, predict_slices(v, classifiers, windows)});
    io::AtomicOutputs out;
    out.stage(o.out, encode_slice_probabilities(probs));
    out.commit();
}

/// Writes folds.csv and oof.csv into --out. Existing folds are reused with --folds.
inline void cmd_oof(const Options& o) {
    detail::require(o.out, "--out");
    const auto windows = detail::parse_windows(o.windows);
    const auto rows = detail::manifest(o);
    FoldAssignment folds;
    if (o.folds.empty()) {
        folds = assign_folds(rows, o.k, o.seed);
    } else {
        detail::require_file(o.folds, "--folds");
        folds = load_folds(o.folds);
    }
    const auto vols = detail::volumes(o, rows);
    const auto oof = generate_oof(vols, folds, reference_train_procedure(default_reference_config(o.seed), windows), windows);
    io::AtomicOutputs out;
    out.stage(fs::path(o.out) / "folds.csv", encode_folds(folds));
    out.stage(fs::path(o.out) / "oof.csv", encode_slice_probabilities(oof));
    out.commit();
}

inline void cmd_stack_train(const Options& o) {
    detail::require(o.out, "--out");
    const auto rows = detail::manifest(o);
    const auto oof = detail::aligned_probs(rows, o.oof, "--oof");
    const auto labels = detail::scan_labels(o, rows, oof);
    const auto presets = gbdt::default_presets(o.seed);
    const auto model = train_stacker(oof, labels, o.delta_s, presets);
    io::AtomicOutputs out;
    out.stage(o.out, encode_stacker(model));
    out.commit();
}

inline void cmd_stack_apply(const Options& o) {
    detail::require(o.out, "--out");
    if (o.models.size() != 1) throw Error(ErrorKind::Configuration, "stack-apply takes exactly one --model");
    detail::require_file(o.models[0], "--model");
    detail::require_file(o.probs, "--probs");
    const auto model = decode_stacker(io::read_file(o.models[0]));
    const auto stacked = apply_stacker(model, load_slice_probabilities(o.probs), o.delta_s);
    io::AtomicOutputs out;
    out.stage(o.out, encode_slice_probabilities(stacked));
    out.commit();
}

inline void cmd_optimize(const Options& o) {
    detail::require(o.out, "--out");
    const auto rows = detail::manifest(o);
    const auto probs = detail::aligned_probs(rows, o.probs, "--probs");
    ScanScores data;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        data.scores.push_back(aggregate_scan(probs[i].rows));
        data.labels.push_back(rows[i].labels);
    }
    OptimizerConfig cfg;
    cfg.objective = parse_objective(o.objective);
    cfg.budget = o.budget;
    cfg.seed = o.seed;
    const auto res = optimize_thresholds(data, cfg);
    io::AtomicOutputs out;
    out.stage(o.out, "# objective " + to_string(cfg.objective) + " = " + format_double(res.objective) + "\n" + encode_thresholds(res.best));
    out.commit();
}

/// metrics.csv, metrics.txt and decisions.csv in --out.
inline void cmd_evaluate(const Options& o) {
    detail::require(o.out, "--out");
    const auto e = detail::evaluate(o, false);
    io::AtomicOutputs out;
    detail::stage_metrics(out, o.out, e);
    out.stage(fs::path(o.out) / "decisions.csv", detail::decisions_csv(e));
    out.commit();
}

/// Metrics tables plus ROC, cumulative-curve, box-plot and interval figures.
inline void cmd_report(const Options& o) {
    detail::require(o.out, "--out");
    if (!o.decisions.empty()) throw Error(ErrorKind::Configuration, "report needs --probs and --thresholds, not --decisions");
    const auto e = detail::evaluate(o, true);
    const fs::path dir = o.out;
    io::AtomicOutputs out;
    detail::stage_metrics(out, dir, e);
    detail::stage_roc(out, dir, e);
    detail::stage_cumulative(out, dir, e);
    detail::stage_boxplot(out, dir, e);
    detail::stage_ci(out, dir, e);
    out.commit();
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Intracranial hemorrhage triage pipeline"};
    app.require_subcommand(1);
    Options o;

    auto manifest = [&](CLI::App* c) { c->add_option("--manifest", o.manifest, "Manifest CSV"); };
    auto volumes = [&](CLI::App* c) {
        c->add_option("--volumes", o.volumes, "Base directory for volume paths (default: the manifest's directory)");
        c->add_option("--slice-labels", o.slice_labels, "Per-slice label CSV");
    };
    auto seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Seed for all randomness"); };
    auto windows = [&](CLI::App* c) { c->add_option("--windows", o.windows, "Three center:width windows, comma separated"); };
    auto out = [&](CLI::App* c, const char* what) { c->add_option("--out", o.out, what); };

    std::map<CLI::App*, void (*)(const Options&)> commands;
    auto add = [&](const char* name, const char* help, void (*fn)(const Options&)) {
        auto* c = app.add_subcommand(name, help);
        commands[c] = fn;
        return c;
    };

    auto* c = add("synth", "Generate a synthetic phantom dataset", cmd_synth);
    c->add_option("--scans", o.scans, "Number of scans")->check(CLI::PositiveNumber);
    c->add_option("--any-fraction", o.any_fraction, "Fraction of positive scans")->check(CLI::Range(0.0, 1.0));
    c->add_option("--size", o.size, "Slice height and width in pixels");
    c->add_option("--repeat-patients", o.repeat_fraction, "Fraction of patients owning two scans")->check(CLI::Range(0.0, 1.0));
    seed(c);
    out(c, "Output directory");

    c = add("slice-train", "Train the reference slice classifier", cmd_slice_train);
    manifest(c);
    volumes(c);
    windows(c);
    seed(c);
    out(c, "Model file");

    c = add("slice-predict", "Per-slice probabilities from one or more slice models", cmd_slice_predict);
    manifest(c);
    volumes(c);
    c->add_option("--model", o.models, "Slice model file (repeatable; outputs are averaged)");
    out(c, "Slice-probability CSV");

    c = add("oof", "Out-of-fold slice probabilities over patient-grouped folds", cmd_oof);
    manifest(c);
    volumes(c);
    windows(c);
    seed(c);
    c->add_option("--k", o.k, "Fold count");
    c->add_option("--folds", o.folds, "Existing fold assignment CSV to reuse");
    out(c, "Output directory for folds.csv and oof.csv");

    c = add("stack-train", "Train the sliding-window stacker on out-of-fold probabilities", cmd_stack_train);
    manifest(c);
    c->add_option("--slice-labels", o.slice_labels, "Per-slice label CSV");
    c->add_option("--oof", o.oof, "Out-of-fold slice-probability CSV");
    c->add_option("--delta-s", o.delta_s, "Slices on each side of the window");
    seed(c);
    out(c, "Stacker model file");

    c = add("stack-apply", "Refine slice probabilities with a trained stacker", cmd_stack_apply);
    c->add_option("--model", o.models, "Stacker model file");
    c->add_option("--probs", o.probs, "Slice-probability CSV");
    c->add_option("--delta-s", o.delta_s, "Must equal the stacker's trained value");
    out(c, "Stacked slice-probability CSV");

    c = add("optimize", "Tune per-type thresholds on a validation set", cmd_optimize);
    manifest(c);
    c->add_option("--probs", o.probs, "Slice-probability CSV");
    c->add_option("--objective", o.objective, "any-bacc or type-bacc-mean");
    c->add_option("--budget", o.budget, "Objective evaluations")->check(CLI::PositiveNumber);
    seed(c);
    out(c, "Threshold file");

    for (auto [name, help, fn] : {std::tuple{"evaluate", "Scan-level metrics from probabilities or decisions", cmd_evaluate},
                                  std::tuple{"report", "Metrics tables and figures", cmd_report}}) {
        c = add(name, help, fn);
        manifest(c);
        c->add_option("--probs", o.probs, "Slice-probability CSV");
        c->add_option("--thresholds", o.thresholds, "Threshold file");
        if (std::string(name) == "evaluate") c->add_option("--decisions", o.decisions, "Scan decisions CSV (scan_id, d_edh..d_iph, d_any)");
        out(c, "Output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto previous = set_warning_sink([](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
    int status = 0;
    try {
        for (const auto& [sub, fn] : commands)
            if (sub->parsed()) fn(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        status = 1;
    }
    set_warning_sink(std::move(previous));
    return status;
}

}  // namespace ichtriage::cli
