#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "ichtriage/synth.hpp"

using namespace ichtriage;

namespace {

synth::SynthConfig small_config(std::uint64_t seed) {
    synth::SynthConfig c;
    c.num_scans = 24;
    c.any_fraction = 0.6;
    c.seed = seed;
    return c;
}

std::size_t count_bits(const std::vector<std::uint8_t>& mask, std::size_t k) {
    std::size_t n = 0;
    for (auto m : mask) n += (m >> k) & 1u;
    return n;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ichtriage-synth-" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Synth, DeterministicGivenSeed) {
    const auto a = synth::generate(small_config(5));
    const auto b = synth::generate(small_config(5));
    ASSERT_EQ(a.scans.size(), b.scans.size());
    for (std::size_t i = 0; i < a.scans.size(); ++i) EXPECT_EQ(encode_volume(a.scans[i].volume), encode_volume(b.scans[i].volume));
    EXPECT_EQ(encode_manifest(a.manifest), encode_manifest(b.manifest));
    const auto c = synth::generate(small_config(6));
    EXPECT_NE(encode_volume(a.scans[0].volume), encode_volume(c.scans[0].volume));
}

TEST(Synth, ExactPositiveCount) {
    auto cfg = small_config(1);
    cfg.num_scans = 100;
    cfg.any_fraction = 0.3;
    cfg.height = cfg.width = 32;
    cfg.min_lesion_pixels = 10;
    const auto ds = synth::generate(cfg);
    std::size_t pos = 0;
    for (const auto& r : ds.manifest) pos += r.any();
    EXPECT_EQ(pos, 30u);
}

TEST(Synth, ZeroFractionsGiveCleanNegatives) {
    auto cfg = small_config(2);
    cfg.type_fraction.fill(0.0);
    for (double any : {0.0, 0.6}) {
        cfg.any_fraction = any;
        const auto ds = synth::generate(cfg);
        for (const auto& r : ds.manifest) EXPECT_FALSE(r.any());
        for (const auto& s : ds.scans)
            for (std::size_t z = 0; z < s.volume.num_slices(); ++z)
                for (std::size_t i = 0; i < s.brain_mask[z].size(); ++i)
                    if (s.brain_mask[z][i]) {
                        const auto hu = s.volume.slices[z][i];
                        ASSERT_FALSE(hu >= cfg.blood.lo && hu <= cfg.blood.hi);
                    }
    }
}

TEST(Synth, SliceLabelsMarkLesionSlices) {
    const auto cfg = small_config(3);
    const auto ds = synth::generate(cfg);
    std::size_t positives = 0;
    for (std::size_t s = 0; s < ds.scans.size(); ++s) {
        const auto& scan = ds.scans[s];
        const auto& labels = *scan.volume.labels->slices;
        EXPECT_EQ(scan.volume.labels->scan, ds.manifest[s].labels);
        bool any_slice = false;
        for (std::size_t z = 0; z < labels.size(); ++z) {
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                const auto painted = count_bits(scan.lesion_mask[z], k);
                EXPECT_EQ(labels[z][k], painted > 0);
                if (!labels[z][k]) continue;
                any_slice = true;
                std::size_t blood = 0;
                for (std::size_t i = 0; i < scan.lesion_mask[z].size(); ++i) {
                    if (!((scan.lesion_mask[z][i] >> k) & 1u)) continue;
                    EXPECT_TRUE(scan.brain_mask[z][i]);
                    const auto hu = scan.volume.slices[z][i];
                    blood += hu >= cfg.blood.lo && hu <= cfg.blood.hi;
                }
                EXPECT_GE(blood, cfg.min_lesion_pixels);
            }
        }
        EXPECT_EQ(any_slice, ds.manifest[s].any());
        positives += ds.manifest[s].any();
    }
    EXPECT_EQ(positives, 14u);  // round(24 * 0.6)
}

TEST(Synth, LesionsAreBrighterUnderTheBrainWindow) {
    const auto ds = synth::generate(small_config(4));
    const WindowSpec brain = kDefaultWindows[0];
    for (const auto& s : ds.scans)
        for (std::size_t z = 0; z < s.volume.num_slices(); ++z) {
            double lesion = 0.0, other = 0.0;
            std::size_t nl = 0, no = 0;
            for (std::size_t i = 0; i < s.brain_mask[z].size(); ++i) {
                if (!s.brain_mask[z][i]) continue;
                const double w = window_value(s.volume.slices[z][i], brain);
                if (s.lesion_mask[z][i]) {
                    lesion += w;
                    ++nl;
                } else {
                    other += w;
                    ++no;
                }
            }
            if (nl) {
                EXPECT_GE(lesion / nl - other / no, 0.1);
            }
        }
}

TEST(Synth, ExtraAxialTypesHugTheSkull) {
    auto cfg = small_config(7);
    cfg.num_scans = 30;
    cfg.any_fraction = 1.0;
    const auto ds = synth::generate(cfg);
    const auto w = cfg.width;
    for (const auto& s : ds.scans)
        for (std::size_t z = 0; z < s.volume.num_slices(); ++z)
            for (std::size_t k : {0u, 1u}) {
                if (!count_bits(s.lesion_mask[z], k)) continue;
                bool touches = false;
                for (std::size_t i = 0; i < s.lesion_mask[z].size() && !touches; ++i) {
                    if (!((s.lesion_mask[z][i] >> k) & 1u)) continue;
                    for (long d : {-1L, 1L, -static_cast<long>(w), static_cast<long>(w)}) {
                        const long j = static_cast<long>(i) + d;
                        if (j >= 0 && j < static_cast<long>(s.brain_mask[z].size()) && !s.brain_mask[z][static_cast<std::size_t>(j)]) touches = true;
                    }
                }
                EXPECT_TRUE(touches) << s.volume.scan_id << " slice " << z << " type " << k;
            }
}

TEST(Synth, PatientsOwnOneOrTwoScans) {
    auto cfg = small_config(8);
    cfg.num_scans = 50;
    cfg.repeat_patient_fraction = 0.25;
    const auto ds = synth::generate(cfg);
    std::map<std::string, int> owned;
    for (const auto& r : ds.manifest) ++owned[r.patient_id];
    std::size_t doubles = 0;
    for (const auto& [id, n] : owned) {
        EXPECT_LE(n, 2);
        doubles += n == 2;
    }
    EXPECT_EQ(doubles, 10u);  // floor(50 * 0.25 / 1.25)
    EXPECT_EQ(owned.size(), 40u);
}

TEST(Synth, InvalidOrInfeasibleConfigs) {
    auto expect_config_error = [](const synth::SynthConfig& c) {
        try {
            synth::generate(c);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Configuration);
        }
    };
    auto c = small_config(9);
    c.lesion[4].hi = 1.2;
    expect_config_error(c);
    c = small_config(9);
    c.any_fraction = 1.5;
    expect_config_error(c);
    c = small_config(9);
    c.blood = {30, 90};
    expect_config_error(c);
    c = small_config(9);
    c.min_span = 0;
    expect_config_error(c);
    c = small_config(9);
    c.height = c.width = 16;
    c.min_lesion_pixels = 400;
    c.any_fraction = 1.0;
    expect_config_error(c);
}

TEST(Synth, WrittenDatasetLoadsBack) {
    const auto ds = synth::generate(small_config(10));
    const auto dir = scratch_dir("roundtrip");
    synth::write_dataset(ds, dir);
    const auto manifest = load_manifest(dir / "manifest.csv");
    EXPECT_EQ(manifest, ds.manifest);
    const auto slice_labels = parse_slice_labels(io::CsvTable::load(dir / "slice_labels.csv"));
    const auto vols = load_dataset(manifest, dir, &slice_labels);
    ASSERT_EQ(vols.size(), ds.scans.size());
    for (std::size_t i = 0; i < vols.size(); ++i) {
        EXPECT_EQ(vols[i].slices, ds.scans[i].volume.slices);
        EXPECT_EQ(vols[i].labels, ds.scans[i].volume.labels);
    }
    std::filesystem::remove_all(dir);
}

TEST(SynthProbabilities, CoherentPositiveSpans) {
    synth::CoherenceConfig cfg;
    cfg.num_scans = 120;
    cfg.seed = 3;
    const auto ds = synth::generate_probabilities(cfg);
    ASSERT_EQ(ds.probs.size(), 120u);
    std::size_t positives = 0;
    for (std::size_t s = 0; s < ds.probs.size(); ++s) {
        const auto& rows = ds.probs[s].rows;
        const auto& labels = *ds.labels[s].slices;
        ASSERT_EQ(rows.size(), labels.size());
        EXPECT_GE(rows.size(), cfg.min_slices);
        EXPECT_LE(rows.size(), cfg.max_slices);
        positives += ds.labels[s].any();
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            std::size_t runs = 0, length = 0;
            for (std::size_t z = 0; z <= rows.size(); ++z) {
                const bool on = z < rows.size() && labels[z][k];
                if (on) {
                    ++length;
                    EXPECT_GE(rows[z][k], cfg.positive_lo);
                    EXPECT_LE(rows[z][k], cfg.positive_hi);
                } else if (length) {
                    ++runs;
                    EXPECT_GE(length, cfg.min_span);
                    EXPECT_LE(length, cfg.max_span);
                    length = 0;
                }
            }
            EXPECT_LE(runs, 1u);
        }
        for (const auto& r : rows) EXPECT_TRUE(r.valid());
    }
    EXPECT_EQ(positives, 60u);
    const auto again = synth::generate_probabilities(cfg);
    EXPECT_EQ(encode_slice_probabilities(again.probs), encode_slice_probabilities(ds.probs));
}
