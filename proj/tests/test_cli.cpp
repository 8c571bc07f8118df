#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "ichtriage/cli.hpp"
#include "published_tables.hpp"

using namespace ichtriage;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "ichtriage");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ichtriage-cli-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<fs::path> listing(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) out.push_back(fs::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

// Coherence phantoms written as a manifest, slice labels and probabilities.
void write_phantoms(const fs::path& dir, std::size_t scans, std::uint64_t seed) {
    synth::CoherenceConfig cfg;
    cfg.num_scans = scans;
    cfg.seed = seed;
    const auto ds = synth::generate_probabilities(cfg);
    std::vector<ManifestRow> rows;
    std::vector<std::pair<std::string, std::vector<TypeFlags>>> slices;
    for (std::size_t i = 0; i < ds.probs.size(); ++i) {
        const auto& id = ds.probs[i].scan_id;
        rows.push_back({id, "P" + id, "volumes/" + id + ".vol", ds.labels[i].scan});
        slices.emplace_back(id, *ds.labels[i].slices);
    }
    io::write_file(dir / "manifest.csv", encode_manifest(rows));
    io::write_file(dir / "slice_labels.csv", encode_slice_labels(slices));
    io::write_file(dir / "probs.csv", encode_slice_probabilities(ds.probs));
}

}  // namespace

TEST(Cli, DecisionsWithExternalAnyCountsReproduceTheTableRow) {
    const auto& want = published::kRows[11];
    ASSERT_EQ(want.label, "Any");
    const auto dir = scratch_dir("table-any");
    std::vector<ManifestRow> rows;
    io::CsvWriter decisions{"scan_id", "d_edh", "d_sdh", "d_sah", "d_ivh", "d_iph", "d_any"};
    auto add = [&](long count, bool truth, bool decided) {
        for (long i = 0; i < count; ++i) {
            const std::string id = "X" + std::to_string(rows.size());
            ManifestRow r{id, "Q" + id, "unused.vol", {}};
            r.labels[4] = truth;
            rows.push_back(r);
            decisions.row(std::vector<std::string>{id, "0", "0", "0", "0", "0", decided ? "1" : "0"});
        }
    };
    add(want.tp, true, true);
    add(want.fn, true, false);
    add(want.tn, false, false);
    add(want.fp, false, true);
    ASSERT_EQ(static_cast<long>(rows.size()), published::kExternalCount);
    io::write_file(dir / "manifest.csv", encode_manifest(rows));
    io::write_file(dir / "decisions.csv", decisions.str());

    ASSERT_EQ(run({"evaluate", "--manifest", (dir / "manifest.csv").string(), "--decisions", (dir / "decisions.csv").string(), "--out",
                   (dir / "eval").string()}),
              0);
    const auto t = io::CsvTable::load(dir / "eval" / "metrics.csv");
    ASSERT_EQ(t.rows(), kNumLabels);
    const std::size_t any = kAnyLabel;
    EXPECT_EQ(t.cell(any, "Hemorrhage"), "Any");
    EXPECT_EQ(t.cell(any, "TP"), std::to_string(want.tp));
    EXPECT_EQ(t.cell(any, "FN"), std::to_string(want.fn));
    EXPECT_EQ(t.cell(any, "TN"), std::to_string(want.tn));
    EXPECT_EQ(t.cell(any, "FP"), std::to_string(want.fp));
    EXPECT_EQ(t.cell(any, "AUC"), "NA");
    for (std::size_t c = 0; c < published::kColumns.size(); ++c)
        EXPECT_NEAR(parse_double(t.cell(any, std::string(published::kColumns[c]))), want.percent[c], 0.05 + 1e-9) << published::kColumns[c];
    fs::remove_all(dir);
}

TEST(Cli, StackApplyWithWrongDeltaSFailsWithoutOutput) {
    const auto dir = scratch_dir("delta-s");
    write_phantoms(dir, 60, 4);
    const auto manifest = (dir / "manifest.csv").string(), probs = (dir / "probs.csv").string();
    ASSERT_EQ(run({"stack-train", "--manifest", manifest, "--slice-labels", (dir / "slice_labels.csv").string(), "--oof", probs,
                   "--delta-s", "1", "--out", (dir / "stacker.model").string()}),
              0);
    const auto before = listing(dir);
    EXPECT_NE(run({"stack-apply", "--model", (dir / "stacker.model").string(), "--probs", probs, "--out",
                   (dir / "out" / "stacked.csv").string()}),
              0);
    EXPECT_NE(run({"stack-apply", "--model", (dir / "stacker.model").string(), "--probs", probs, "--delta-s", "3", "--out",
                   (dir / "stacked.csv").string()}),
              0);
    EXPECT_EQ(listing(dir), before);
    EXPECT_EQ(run({"stack-apply", "--model", (dir / "stacker.model").string(), "--probs", probs, "--delta-s", "1", "--out",
                   (dir / "stacked.csv").string()}),
              0);
    EXPECT_EQ(load_slice_probabilities(dir / "stacked.csv").size(), 60u);
    fs::remove_all(dir);
}

TEST(Cli, BadInputsExitNonzero) {
    const auto dir = scratch_dir("bad-inputs");
    write_phantoms(dir, 20, 5);
    const auto manifest = (dir / "manifest.csv").string();
    EXPECT_NE(run({"optimize", "--manifest", (dir / "missing.csv").string(), "--probs", (dir / "probs.csv").string(), "--out",
                   (dir / "t.txt").string()}),
              0);
    EXPECT_NE(run({"optimize", "--manifest", manifest, "--probs", (dir / "probs.csv").string(), "--objective", "nope", "--out",
                   (dir / "t.txt").string()}),
              0);
    EXPECT_NE(run({"evaluate", "--manifest", manifest, "--out", (dir / "e").string()}), 0);
    EXPECT_NE(run({"slice-train", "--windows", "40:80,80:0,40:380", "--manifest", manifest, "--out", (dir / "m").string()}), 0);
    EXPECT_NE(run({"no-such-command"}), 0);
    EXPECT_FALSE(fs::exists(dir / "t.txt"));
    EXPECT_FALSE(fs::exists(dir / "e"));
    EXPECT_FALSE(fs::exists(dir / "m"));

    // A probability file naming a scan outside the manifest is rejected.
    auto rows = load_manifest(manifest);
    rows.pop_back();
    io::write_file(dir / "short.csv", encode_manifest(rows));
    EXPECT_NE(run({"optimize", "--manifest", (dir / "short.csv").string(), "--probs", (dir / "probs.csv").string(), "--out",
                   (dir / "t.txt").string()}),
              0);
    fs::remove_all(dir);
}

TEST(Cli, PipelineRunsTwiceToIdenticalReports) {
    auto pipeline = [](const fs::path& dir) {
        auto p = [&](const char* name) { return (dir / name).string(); };
        ASSERT_EQ(run({"synth", "--scans", "24", "--size", "48", "--any-fraction", "0.5", "--seed", "11", "--out", p("train")}), 0);
        ASSERT_EQ(run({"synth", "--scans", "16", "--size", "48", "--any-fraction", "0.5", "--seed", "12", "--out", p("val")}), 0);
        const auto tm = p("train/manifest.csv"), tl = p("train/slice_labels.csv"), vm = p("val/manifest.csv");
        ASSERT_EQ(run({"oof", "--manifest", tm, "--slice-labels", tl, "--k", "3", "--seed", "5", "--out", p("oof")}), 0);
        ASSERT_EQ(run({"slice-train", "--manifest", tm, "--slice-labels", tl, "--seed", "5", "--out", p("slice.model")}), 0);
        ASSERT_EQ(run({"stack-train", "--manifest", tm, "--slice-labels", tl, "--oof", p("oof/oof.csv"), "--seed", "5", "--out",
                       p("stacker.model")}),
                  0);
        ASSERT_EQ(run({"slice-predict", "--manifest", vm, "--model", p("slice.model"), "--model", p("slice.model"), "--out", p("raw.csv")}), 0);
        ASSERT_EQ(run({"stack-apply", "--model", p("stacker.model"), "--probs", p("raw.csv"), "--out", p("stacked.csv")}), 0);
        ASSERT_EQ(run({"optimize", "--manifest", vm, "--probs", p("stacked.csv"), "--budget", "40", "--seed", "5", "--out", p("thr.txt")}), 0);
        ASSERT_EQ(run({"report", "--manifest", vm, "--probs", p("stacked.csv"), "--thresholds", p("thr.txt"), "--out", p("report")}), 0);
    };
    const auto a = scratch_dir("pipeline-a"), b = scratch_dir("pipeline-b");
    pipeline(a);
    pipeline(b);
    const auto files = listing(a);
    ASSERT_EQ(files, listing(b));
    for (const char* f : {"metrics.csv", "metrics.txt", "roc.csv", "roc.svg", "cumulative.csv", "cumulative_summary.csv", "cumulative.svg",
                          "boxplot.csv", "boxplot.svg", "ci.csv", "ci.svg"})
        EXPECT_TRUE(fs::exists(a / "report" / f)) << f;
    for (const auto& f : files) {
        if (fs::is_directory(a / f)) continue;
        EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
    }
    fs::remove_all(a);
    fs::remove_all(b);
}
