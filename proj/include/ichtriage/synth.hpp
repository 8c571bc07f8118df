#pragma once

// Seeded synthetic data: head-CT phantoms with typed hemorrhage geometry, and
// per-slice probability phantoms with multi-slice coherent positives.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/io.hpp"
#include "ichtriage/slicemodel.hpp"
#include "ichtriage/volume.hpp"

namespace ichtriage::synth {

struct HuRange {
    int lo = 0;
    int hi = 0;
};

// Size parameter per type, relative to the brain semi-axes:
// EDH lens depth, SDH crescent thickness, SAH band thickness,
// IVH ventricle fill fraction, IPH ellipse semi-axis.
struct LesionSize {
    double lo = 0.1;
    double hi = 0.2;
};

struct SynthConfig {
    std::size_t num_scans = 40;
    double any_fraction = 0.4;
    std::array<double, kNumTypes> type_fraction{0.25, 0.35, 0.3, 0.2, 0.35};
    std::size_t min_slices = 8;
    std::size_t max_slices = 14;
    std::size_t height = 64;
    std::size_t width = 64;
    HuRange brain{20, 40};
    HuRange csf{0, 15};
    HuRange blood{55, 90};
    HuRange skull{700, 1500};
    int air = -1000;
    std::array<LesionSize, kNumTypes> lesion{{{0.16, 0.24}, {0.07, 0.11}, {0.06, 0.09}, {0.6, 1.0}, {0.18, 0.26}}};
    std::size_t min_span = 2;
    std::size_t max_span = 5;
    double noise_sigma = 2.0;
    std::size_t min_lesion_pixels = 30;
    double repeat_patient_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::Configuration, "synth: " + m); };
        auto fraction = [&](double f, const char* name) {
            if (!(f >= 0.0 && f <= 1.0)) fail(std::string(name) + " must be in [0, 1]");
        };
        auto range = [&](const HuRange& r, const char* name) {
            if (r.lo > r.hi || r.lo < kMinHu || r.hi > kMaxHu) fail(std::string(name) + " HU range must be ordered within [-1024, 4095]");
        };
        if (num_scans == 0) fail("num_scans must be positive");
        fraction(any_fraction, "any_fraction");
        for (double f : type_fraction) fraction(f, "type_fraction");
        fraction(repeat_patient_fraction, "repeat_patient_fraction");
        if (min_slices == 0 || min_slices > max_slices) fail("slice range must satisfy 1 <= min <= max");
        if (min_span == 0 || min_span > max_span) fail("lesion span range must satisfy 1 <= min <= max");
        if (height < 16 || width < 16) fail("images must be at least 16x16");
        range(brain, "brain");
        range(csf, "csf");
        range(blood, "blood");
        range(skull, "skull");
        if (air < kMinHu || air > kMaxHu) fail("air HU outside [-1024, 4095]");
        if (brain.hi >= blood.lo || csf.hi >= blood.lo || skull.lo <= blood.hi)
            fail("blood band must lie strictly between soft tissue and bone");
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be non-negative");
        if (min_lesion_pixels == 0) fail("min_lesion_pixels must be positive");
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            const auto& s = lesion[k];
            const double limit = k == 3 ? 1.0 : 0.999;
            if (!(s.lo > 0.0 && s.lo <= s.hi)) fail(std::string(kTypeKeys[k]) + " lesion size range must be positive and ordered");
            if (s.hi > limit) fail(std::string(kTypeKeys[k]) + " lesion is larger than the head");
        }
    }
};

struct SynthScan {
    CtVolume volume;  // carries per-slice labels
    std::vector<std::vector<std::uint8_t>> brain_mask;
    std::vector<std::vector<std::uint8_t>> lesion_mask;  // bit k set where type k was painted
};

struct SynthDataset {
    std::vector<SynthScan> scans;
    std::vector<ManifestRow> manifest;
};

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

inline double angle_gap(double a, double b) {
    double d = std::fmod(a - b, 2.0 * kPi);
    if (d > kPi) d -= 2.0 * kPi;
    if (d < -kPi) d += 2.0 * kPi;
    return d;
}

// Number of patients and the scan -> patient slot map; the first
// `doubles` patients own two scans.
inline std::vector<std::size_t> patient_slots(std::size_t num_scans, double repeat_fraction, Rng& rng) {
    const auto doubles = static_cast<std::size_t>(std::floor(static_cast<double>(num_scans) * repeat_fraction / (1.0 + repeat_fraction)));
    std::vector<std::size_t> slots;
    const std::size_t patients = num_scans - doubles;
    for (std::size_t p = 0; p < patients; ++p) {
        slots.push_back(p);
        if (p < doubles) slots.push_back(p);
    }
    rng.shuffle(slots);
    return slots;
}

inline std::vector<std::uint8_t> positive_layout(std::size_t num_scans, double fraction, Rng& rng) {
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(num_scans) * fraction));
    std::vector<std::uint8_t> pos(num_scans, 0);
    std::fill(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(std::min(count, num_scans)), 1);
    rng.shuffle(pos);
    return pos;
}

inline std::string padded_id(char prefix, std::size_t i) {
    std::string n = std::to_string(i + 1);
    if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
    return prefix + n;
}

struct Head {
    double cx, cy, a, b, skull;
};

// Brain-normalised polar coordinates of a pixel centre on slice z.
struct Polar {
    double u, v, r, theta;
};

struct Lesion {
    std::size_t type;
    std::size_t first, last;
    double size, theta, halfwidth, radius, aspect;
    int side;  // IVH: which ventricles (0 left, 1 right, 2 both)
    int hu_mean;
};

inline bool in_ventricle(double u, double v, int side, double* local_v = nullptr) {
    const double centres[2] = {-0.17, 0.17};
    for (int s = 0; s < 2; ++s) {
        if (side != 2 && side != s) continue;
        const double du = (u - centres[s]) / 0.11, dv = (v + 0.05) / 0.30;
        if (du * du + dv * dv < 1.0) {
            if (local_v) *local_v = dv;
            return true;
        }
    }
    return false;
}

inline bool lesion_covers(const Lesion& l, const Polar& p, double scale) {
    const double d = angle_gap(p.theta, l.theta);
    switch (l.type) {
        case 0: {  // biconvex lens hugging the inner table
            if (std::abs(d) >= l.halfwidth) return false;
            const double q = d / l.halfwidth;
            return p.r < 1.0 && p.r > 1.0 - l.size * scale * (1.0 - q * q);
        }
        case 1: {  // long thin crescent
            if (std::abs(d) >= l.halfwidth) return false;
            const double q = d / l.halfwidth;
            return p.r < 1.0 && p.r > 1.0 - l.size * scale * (1.0 - 0.5 * q * q);
        }
        case 2: {  // two arcs in the sulci
            for (int k = 0; k < 2; ++k) {
                const double th = l.theta + k * kPi * 0.9, r0 = l.radius - 0.12 * k;
                if (std::abs(angle_gap(p.theta, th)) < l.halfwidth * scale && std::abs(p.r - r0) < l.size / 2.0) return true;
            }
            return false;
        }
        case 3: {  // dependent fill of the ventricles
            double lv = 0.0;
            if (!in_ventricle(p.u, p.v, l.side, &lv)) return false;
            return lv > 1.0 - 2.0 * l.size * scale;
        }
        default: {  // parenchymal ellipse
            const double cu = l.radius * std::cos(l.theta), cv = l.radius * std::sin(l.theta);
            const double su = l.size * scale, sv = l.size * scale * l.aspect;
            const double du = (p.u - cu) / su, dv = (p.v - cv) / sv;
            return du * du + dv * dv < 1.0;
        }
    }
}

inline Lesion draw_lesion(std::size_t type, const SynthConfig& cfg, std::size_t num_slices, Rng& rng) {
    Lesion l{};
    l.type = type;
    const auto hi = std::min(cfg.max_span, num_slices), lo = std::min(cfg.min_span, hi);
    const auto span = static_cast<std::size_t>(rng.integer(static_cast<long long>(lo), static_cast<long long>(hi)));
    l.first = static_cast<std::size_t>(rng.below(num_slices - span + 1));
    l.last = l.first + span - 1;
    l.size = rng.uniform(cfg.lesion[type].lo, cfg.lesion[type].hi);
    l.theta = rng.uniform(-kPi, kPi);
    l.halfwidth = type == 0 ? rng.uniform(0.6, 0.9) : type == 1 ? rng.uniform(1.0, 1.5) : rng.uniform(0.6, 1.0);
    l.radius = type == 2 ? rng.uniform(0.72, 0.86) : rng.uniform(0.3, 0.55);
    l.aspect = rng.uniform(0.75, 1.3);
    l.side = static_cast<int>(rng.below(3));
    l.hu_mean = static_cast<int>(rng.integer(cfg.blood.lo, cfg.blood.hi));
    if (type == 4) l.radius = std::min(l.radius, 0.95 - l.size * std::max(1.0, l.aspect));
    return l;
}

// Shrinks lesions toward the ends of their span.
inline double span_scale(const Lesion& l, std::size_t z) {
    const double half = (static_cast<double>(l.last - l.first) + 1.0) / 2.0;
    const double centre = (static_cast<double>(l.first) + static_cast<double>(l.last)) / 2.0;
    const double t = (static_cast<double>(z) - centre) / (half + 0.5);
    return 0.5 + 0.5 * std::sqrt(std::max(0.0, 1.0 - t * t));
}

inline int tissue_value(const HuRange& r, double mean, double sigma, Rng& rng) {
    const double v = std::round(mean + sigma * rng.normal());
    return static_cast<int>(std::clamp(v, static_cast<double>(r.lo), static_cast<double>(r.hi)));
}

inline SynthScan generate_scan(const SynthConfig& cfg, std::size_t index, bool positive, std::size_t patient) {
    Rng rng(derive_seed(cfg.seed, index));
    const auto num_slices = static_cast<std::size_t>(rng.integer(static_cast<long long>(cfg.min_slices), static_cast<long long>(cfg.max_slices)));
    const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);
    Head head{W / 2.0 + rng.uniform(-1.0, 1.0), H / 2.0 + rng.uniform(-1.0, 1.0), 0.44 * W * rng.uniform(0.95, 1.0),
              0.47 * H * rng.uniform(0.95, 1.0), std::max(2.0, 0.05 * std::min(W, H))};
    const double brain_mean = rng.uniform(cfg.brain.lo + 0.25 * (cfg.brain.hi - cfg.brain.lo), cfg.brain.hi - 0.25 * (cfg.brain.hi - cfg.brain.lo));
    const double csf_mean = rng.uniform(cfg.csf.lo + 0.25 * (cfg.csf.hi - cfg.csf.lo), cfg.csf.hi - 0.25 * (cfg.csf.hi - cfg.csf.lo));
    const double skull_mean = rng.uniform(cfg.skull.lo, cfg.skull.hi);

    const std::size_t plane = cfg.height * cfg.width;
    std::vector<std::vector<Polar>> polar(num_slices, std::vector<Polar>(plane));
    SynthScan scan;
    scan.brain_mask.assign(num_slices, std::vector<std::uint8_t>(plane, 0));
    scan.lesion_mask.assign(num_slices, std::vector<std::uint8_t>(plane, 0));
    std::vector<std::vector<std::uint8_t>> in_head(num_slices, std::vector<std::uint8_t>(plane, 0));
    for (std::size_t z = 0; z < num_slices; ++z) {
        const double s = 0.8 + 0.2 * std::sin(kPi * (static_cast<double>(z) + 0.5) / static_cast<double>(num_slices));
        const double ao = head.a * s, bo = head.b * s, ai = ao - head.skull, bi = bo - head.skull;
        for (std::size_t y = 0; y < cfg.height; ++y)
            for (std::size_t x = 0; x < cfg.width; ++x) {
                const double px = static_cast<double>(x) + 0.5 - head.cx, py = static_cast<double>(y) + 0.5 - head.cy;
                const double ro = std::hypot(px / ao, py / bo);
                Polar p{px / ai, py / bi, 0.0, 0.0};
                p.r = std::hypot(p.u, p.v);
                p.theta = std::atan2(p.v, p.u);
                const std::size_t i = y * cfg.width + x;
                polar[z][i] = p;
                in_head[z][i] = ro < 1.0;
                scan.brain_mask[z][i] = p.r < 1.0;
            }
    }

    // Types present.
    TypeFlags types{};
    if (positive) {
        double total = 0.0;
        for (std::size_t k = 0; k < kNumTypes; ++k) {
            types[k] = rng.uniform() < cfg.type_fraction[k];
            total += cfg.type_fraction[k];
        }
        if (std::none_of(types.begin(), types.end(), [](bool b) { return b; })) {
            double u = rng.uniform() * total;
            std::size_t pick = kNumTypes - 1;
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                if (u < cfg.type_fraction[k]) {
                    pick = k;
                    break;
                }
                u -= cfg.type_fraction[k];
            }
            while (cfg.type_fraction[pick] == 0.0) pick = (pick + kNumTypes - 1) % kNumTypes;
            types[pick] = true;
        }
    }

    std::vector<TypeFlags> slice_labels(num_slices, TypeFlags{});
    std::vector<std::vector<int>> blood_hu(num_slices, std::vector<int>(plane, 0));
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        if (!types[k]) continue;
        bool placed = false;
        for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
            const Lesion l = draw_lesion(k, cfg, num_slices, rng);
            std::vector<std::vector<std::size_t>> cover(num_slices);
            for (std::size_t z = l.first; z <= l.last; ++z) {
                const double sc = span_scale(l, z);
                for (std::size_t i = 0; i < plane; ++i)
                    if (scan.brain_mask[z][i] && lesion_covers(l, polar[z][i], sc)) cover[z].push_back(i);
            }
            // Fringe slices under the pixel minimum are left unpainted so
            // that labels mark exactly the slices holding lesion pixels.
            for (std::size_t z = l.first; z <= l.last; ++z)
                if (cover[z].size() >= cfg.min_lesion_pixels) placed = true;
            if (!placed) continue;
            for (std::size_t z = l.first; z <= l.last; ++z) {
                if (cover[z].size() < cfg.min_lesion_pixels) continue;
                slice_labels[z][k] = true;
                for (auto i : cover[z]) {
                    scan.lesion_mask[z][i] |= static_cast<std::uint8_t>(1u << k);
                    blood_hu[z][i] = l.hu_mean;
                }
            }
        }
        if (!placed)
            throw Error(ErrorKind::Configuration, "synth: infeasible " + std::string(kTypeKeys[k]) + " geometry for " +
                                                      std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                                                      " images with at least " + std::to_string(cfg.min_lesion_pixels) +
                                                      " lesion pixels");
    }

    CtVolume& vol = scan.volume;
    vol.scan_id = padded_id('S', index);
    vol.patient_id = padded_id('P', patient);
    vol.height = cfg.height;
    vol.width = cfg.width;
    vol.slices.assign(num_slices, std::vector<std::int16_t>(plane));
    for (std::size_t z = 0; z < num_slices; ++z)
        for (std::size_t i = 0; i < plane; ++i) {
            int hu;
            const auto& p = polar[z][i];
            if (scan.lesion_mask[z][i])
                hu = tissue_value(cfg.blood, blood_hu[z][i], cfg.noise_sigma, rng);
            else if (scan.brain_mask[z][i])
                hu = in_ventricle(p.u, p.v, 2) ? tissue_value(cfg.csf, csf_mean, cfg.noise_sigma, rng)
                                                : tissue_value(cfg.brain, brain_mean, cfg.noise_sigma, rng);
            else if (in_head[z][i])
                hu = tissue_value(cfg.skull, skull_mean, cfg.noise_sigma, rng);
            else
                hu = tissue_value(HuRange{kMinHu, kMaxHu}, cfg.air, cfg.noise_sigma, rng);
            vol.slices[z][i] = static_cast<std::int16_t>(hu);
        }
    vol.labels = ScanLabels::from_slices(std::move(slice_labels));
    return scan;
}

}  // namespace detail

inline SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng layout(derive_seed(cfg.seed, std::numeric_limits<std::uint64_t>::max()));
    const bool any_type = std::any_of(cfg.type_fraction.begin(), cfg.type_fraction.end(), [](double f) { return f > 0.0; });
    const auto positive = detail::positive_layout(cfg.num_scans, any_type ? cfg.any_fraction : 0.0, layout);
    const auto patients = detail::patient_slots(cfg.num_scans, cfg.repeat_patient_fraction, layout);
    SynthDataset ds;
    ds.scans.reserve(cfg.num_scans);
    for (std::size_t i = 0; i < cfg.num_scans; ++i) {
        ds.scans.push_back(detail::generate_scan(cfg, i, positive[i] != 0, patients[i]));
        const auto& v = ds.scans.back().volume;
        ds.manifest.push_back(ManifestRow{v.scan_id, v.patient_id, "volumes/" + v.scan_id + ".vol", v.labels->scan});
    }
    return ds;
}

/// Writes volumes/*.vol (without embedded labels), manifest.csv and
/// slice_labels.csv under `dir`, all or nothing.
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
    io::AtomicOutputs out;
    std::vector<std::pair<std::string, std::vector<TypeFlags>>> labels;
    for (const auto& s : ds.scans) {
        CtVolume v = s.volume;
        labels.emplace_back(v.scan_id, *v.labels->slices);
        v.labels.reset();
        out.stage(dir / "volumes" / (v.scan_id + ".vol"), encode_volume(v));
    }
    out.stage(dir / "manifest.csv", encode_manifest(ds.manifest));
    out.stage(dir / "slice_labels.csv", encode_slice_labels(labels));
    out.commit();
}

// ---------------------------------------------------------------------------
// Probability phantoms: what a noisy slice classifier might emit. Positives
// are coherent over 3-6 consecutive slices at moderate levels; isolated
// single-slice spikes appear anywhere a slice is not positive.

struct CoherenceConfig {
    std::size_t num_scans = 300;
    double any_fraction = 0.5;
    std::size_t min_slices = 12;
    std::size_t max_slices = 24;
    std::size_t min_span = 3;
    std::size_t max_span = 6;
    double second_type_rate = 0.15;
    double background_hi = 0.15;
    double positive_lo = 0.3;
    double positive_hi = 0.7;
    double spike_rate = 0.06;  // per slice
    double spike_lo = 0.5;
    double spike_hi = 0.95;
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::Configuration, "synth probabilities: " + m); };
        auto unit = [&](double lo, double hi, const char* name) {
            if (!(lo >= 0.0 && lo <= hi && hi <= 1.0)) fail(std::string(name) + " range must be ordered within [0, 1]");
        };
        if (num_scans == 0) fail("num_scans must be positive");
        unit(any_fraction, any_fraction, "any_fraction");
        unit(second_type_rate, second_type_rate, "second_type_rate");
        unit(spike_rate, spike_rate, "spike_rate");
        unit(0.0, background_hi, "background");
        unit(positive_lo, positive_hi, "positive");
        unit(spike_lo, spike_hi, "spike");
        if (min_slices == 0 || min_slices > max_slices) fail("slice range must satisfy 1 <= min <= max");
        if (min_span == 0 || min_span > max_span || max_span > min_slices) fail("span range must satisfy 1 <= min <= max <= min_slices");
    }
};

struct CoherenceDataset {
    std::vector<ScanProbabilities> probs;
    std::vector<ScanLabels> labels;
};

inline CoherenceDataset generate_probabilities(const CoherenceConfig& cfg) {
    cfg.validate();
    Rng layout(derive_seed(cfg.seed, std::numeric_limits<std::uint64_t>::max()));
    const auto positive = detail::positive_layout(cfg.num_scans, cfg.any_fraction, layout);
    CoherenceDataset ds;
    for (std::size_t s = 0; s < cfg.num_scans; ++s) {
        Rng rng(derive_seed(cfg.seed, s));
        const auto n = static_cast<std::size_t>(rng.integer(static_cast<long long>(cfg.min_slices), static_cast<long long>(cfg.max_slices)));
        std::vector<ProbVector> rows(n);
        std::vector<TypeFlags> labels(n, TypeFlags{});
        for (auto& r : rows)
            for (auto& v : r.p) v = rng.uniform(0.0, cfg.background_hi);
        if (positive[s]) {
            TypeFlags types{};
            types[rng.below(kNumTypes)] = true;
            if (rng.uniform() < cfg.second_type_rate) types[rng.below(kNumTypes)] = true;
            for (std::size_t k = 0; k < kNumTypes; ++k) {
                if (!types[k]) continue;
                const auto span = static_cast<std::size_t>(rng.integer(static_cast<long long>(cfg.min_span), static_cast<long long>(cfg.max_span)));
                const auto first = static_cast<std::size_t>(rng.below(n - span + 1));
                for (std::size_t z = first; z < first + span; ++z) {
                    labels[z][k] = true;
                    rows[z][k] = rng.uniform(cfg.positive_lo, cfg.positive_hi);
                }
            }
        }
        for (std::size_t z = 0; z < n; ++z) {
            if (!(rng.uniform() < cfg.spike_rate)) continue;
            const auto k = rng.below(kNumTypes);
            if (!labels[z][k]) rows[z][k] = rng.uniform(cfg.spike_lo, cfg.spike_hi);
        }
        ds.probs.push_back({detail::padded_id('C', s), std::move(rows)});
        ds.labels.push_back(ScanLabels::from_slices(std::move(labels)));
    }
    return ds;
}

}  // namespace ichtriage::synth
