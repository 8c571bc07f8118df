#pragma once

// CT scans in Hounsfield units, the on-disk volume format, the dataset
// manifest, and window center/width intensity transforms.

#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ichtriage/core.hpp"
#include "ichtriage/io.hpp"

namespace ichtriage {

inline constexpr int kMinHu = -1024;
inline constexpr int kMaxHu = 4095;

struct WindowSpec {
    double center = 40.0;
    double width = 80.0;

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

using WindowTriple = std::array<WindowSpec, 3>;

// Brain, subdural and soft-tissue windows.
inline constexpr WindowTriple kDefaultWindows{WindowSpec{40.0, 80.0}, WindowSpec{80.0, 200.0}, WindowSpec{40.0, 380.0}};

struct ScanLabels {
    TypeFlags scan{};
    std::optional<std::vector<TypeFlags>> slices;

    bool any() const {
        for (bool b : scan)
            if (b) return true;
        return false;
    }

    // Scan labels must equal the OR over each per-slice column.
    void validate(std::size_t num_slices) const {
        if (!slices) return;
        if (slices->size() != num_slices)
            throw Error(ErrorKind::Data, "per-slice labels cover " + std::to_string(slices->size()) + " slices, volume has " +
                                             std::to_string(num_slices));
        TypeFlags ored{};
        for (const auto& row : *slices)
            for (std::size_t k = 0; k < kNumTypes; ++k) ored[k] = ored[k] || row[k];
        if (ored != scan) throw Error(ErrorKind::Data, "scan-level labels disagree with the OR of per-slice labels");
    }

    static ScanLabels from_slices(std::vector<TypeFlags> rows) {
        ScanLabels l;
        for (const auto& row : rows)
            for (std::size_t k = 0; k < kNumTypes; ++k) l.scan[k] = l.scan[k] || row[k];
        l.slices = std::move(rows);
        return l;
    }

    friend bool operator==(const ScanLabels&, const ScanLabels&) = default;
};

struct HuGridView {
    std::size_t height = 0;
    std::size_t width = 0;
    std::span<const std::int16_t> hu;
};

/// Ordered craniocaudal stack of equally sized HU slices.
struct CtVolume {
    std::string scan_id;
    std::string patient_id;
    std::size_t height = 0;
    std::size_t width = 0;
    double slice_thickness_mm = 5.0;
    std::vector<std::vector<std::int16_t>> slices;
    std::optional<ScanLabels> labels;

    std::size_t num_slices() const { return slices.size(); }

    HuGridView slice(std::size_t n) const { return {height, width, std::span<const std::int16_t>(slices.at(n))}; }

    void validate() const {
        if (slices.empty()) throw Error(ErrorKind::EmptyVolume, "volume '" + scan_id + "' has no slices");
        if (height == 0 || width == 0) throw Error(ErrorKind::Format, "volume '" + scan_id + "' has zero extent");
        if (!(slice_thickness_mm > 0.0) || !std::isfinite(slice_thickness_mm))
            throw Error(ErrorKind::Format, "slice thickness must be positive");
        for (const auto& s : slices) {
            if (s.size() != height * width)
                throw Error(ErrorKind::Format, "slice size mismatch in volume '" + scan_id + "'");
            for (auto v : s)
                if (v < kMinHu || v > kMaxHu)
                    throw Error(ErrorKind::Format, "HU value " + std::to_string(v) + " outside [-1024, 4095]");
        }
        if (labels) labels->validate(slices.size());
    }

    friend bool operator==(const CtVolume&, const CtVolume&) = default;
};

inline void validate_window(const WindowSpec& spec) {
    if (!(spec.width > 0.0) || !std::isfinite(spec.width) || !std::isfinite(spec.center))
        throw Error(ErrorKind::InvalidWindow, "window width must be positive, got " + format_double(spec.width));
}

inline double window_value(double hu, const WindowSpec& spec) {
    const double lower = spec.center - spec.width / 2.0;
    return clip((hu - lower) / spec.width, 0.0, 1.0);
}

/// Linear ramp with clamping; output in [0,1], row-major like the input.
inline std::vector<double> apply_window(const HuGridView& slice, const WindowSpec& spec) {
    validate_window(spec);
    std::vector<double> out(slice.hu.size());
    for (std::size_t i = 0; i < slice.hu.size(); ++i) out[i] = window_value(slice.hu[i], spec);
    return out;
}

/// Three windowed channels of one slice, channel-major (3 x height x width).
/// `position` is the 1-based slice index divided by the slice count.
struct ChannelImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;
    double position = 1.0;

    static constexpr std::size_t kChannels = 3;

    std::size_t plane() const { return height * width; }
    std::span<const double> channel(std::size_t c) const { return std::span<const double>(data).subspan(c * plane(), plane()); }
};

inline ChannelImage stack_channels(const HuGridView& slice, std::span<const WindowSpec> specs) {
    if (specs.size() != ChannelImage::kChannels)
        throw Error(ErrorKind::Arity, "expected 3 window specs, got " + std::to_string(specs.size()));
    ChannelImage img;
    img.height = slice.height;
    img.width = slice.width;
    img.data.reserve(3 * slice.hu.size());
    for (const auto& spec : specs) {
        auto ch = apply_window(slice, spec);
        img.data.insert(img.data.end(), ch.begin(), ch.end());
    }
    return img;
}

// ---------------------------------------------------------------------------
// Volume file: one line of JSON header, then little-endian int16 HU values in
// slice-major, row-major order.

namespace detail {

inline nlohmann::ordered_json flags_to_json(const TypeFlags& f) {
    auto j = nlohmann::ordered_json::array();
    for (bool b : f) j.push_back(b ? 1 : 0);
    return j;
}

inline TypeFlags flags_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_array() || j.size() != kNumTypes) throw Error(ErrorKind::Format, "label array must have 5 entries");
    TypeFlags f{};
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        const int v = j[k].get<int>();
        if (v != 0 && v != 1) throw Error(ErrorKind::Format, "label entries must be 0/1");
        f[k] = v == 1;
    }
    return f;
}

}  // namespace detail

inline std::string encode_volume(const CtVolume& vol) {
    vol.validate();
    nlohmann::ordered_json h;
    h["format"] = "ichtriage-volume";
    h["version"] = 1;
    h["scan_id"] = vol.scan_id;
    h["patient_id"] = vol.patient_id;
    h["height"] = vol.height;
    h["width"] = vol.width;
    h["num_slices"] = vol.num_slices();
    h["slice_thickness_mm"] = vol.slice_thickness_mm;
    if (vol.labels) {
        h["labels"] = detail::flags_to_json(vol.labels->scan);
        if (vol.labels->slices) {
            auto rows = nlohmann::ordered_json::array();
            for (const auto& r : *vol.labels->slices) rows.push_back(detail::flags_to_json(r));
            h["slice_labels"] = rows;
        }
    }
    std::string out = h.dump();
    out.push_back('\n');
    const std::size_t payload = vol.height * vol.width * vol.num_slices() * 2;
    out.reserve(out.size() + payload);
    for (const auto& s : vol.slices)
        for (std::int16_t v : s) {
            const auto u = static_cast<std::uint16_t>(v);
            out.push_back(static_cast<char>(u & 0xFF));
            out.push_back(static_cast<char>(u >> 8));
        }
    return out;
}

inline CtVolume decode_volume(std::string_view bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) throw Error(ErrorKind::Format, "malformed header: no terminating newline");
    nlohmann::ordered_json h;
    try {
        h = nlohmann::ordered_json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, std::string("malformed header: ") + e.what());
    }
    CtVolume vol;
    long long num_slices = 0;
    try {
        if (h.value("format", "") != "ichtriage-volume") throw Error(ErrorKind::Format, "malformed header: wrong format tag");
        if (h.value("version", 0) != 1) throw Error(ErrorKind::Format, "unsupported volume version");
        vol.scan_id = h.at("scan_id").get<std::string>();
        vol.patient_id = h.at("patient_id").get<std::string>();
        const long long height = h.at("height").get<long long>();
        const long long width = h.at("width").get<long long>();
        num_slices = h.at("num_slices").get<long long>();
        vol.slice_thickness_mm = h.at("slice_thickness_mm").get<double>();
        if (height <= 0 || width <= 0) throw Error(ErrorKind::Format, "malformed header: non-positive extent");
        if (num_slices < 0) throw Error(ErrorKind::Format, "malformed header: negative slice count");
        vol.height = static_cast<std::size_t>(height);
        vol.width = static_cast<std::size_t>(width);
        if (h.contains("labels")) {
            ScanLabels l;
            l.scan = detail::flags_from_json(h["labels"]);
            if (h.contains("slice_labels")) {
                std::vector<TypeFlags> rows;
                for (const auto& r : h["slice_labels"]) rows.push_back(detail::flags_from_json(r));
                l.slices = std::move(rows);
            }
            vol.labels = std::move(l);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, std::string("malformed header: ") + e.what());
    }
    if (num_slices == 0) throw Error(ErrorKind::EmptyVolume, "volume '" + vol.scan_id + "' declares zero slices");

    const std::string_view payload = bytes.substr(nl + 1);
    const std::size_t plane = vol.height * vol.width;
    const std::size_t expected = plane * static_cast<std::size_t>(num_slices) * 2;
    if (payload.size() < expected)
        throw Error(ErrorKind::Format, "truncated payload: " + std::to_string(payload.size()) + " bytes, expected " +
                                           std::to_string(expected));
    if (payload.size() > expected)
        throw Error(ErrorKind::Format, "payload size mismatch: " + std::to_string(payload.size()) + " bytes, expected " +
                                           std::to_string(expected));
    vol.slices.resize(static_cast<std::size_t>(num_slices));
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (auto& s : vol.slices) {
        s.resize(plane);
        for (auto& v : s) {
            v = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
            p += 2;
        }
    }
    vol.validate();
    return vol;
}

inline CtVolume load_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

inline void store_volume(const CtVolume& vol, const std::filesystem::path& path) {
    io::AtomicOutputs out;
    out.stage(path, encode_volume(vol));
    out.commit();
}

// ---------------------------------------------------------------------------
// Dataset manifest: scan_id, patient_id, path, edh, sdh, sah, ivh, iph.

struct ManifestRow {
    std::string scan_id;
    std::string patient_id;
    std::string path;
    TypeFlags labels{};

    bool any() const {
        for (bool b : labels)
            if (b) return true;
        return false;
    }

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

inline std::vector<ManifestRow> parse_manifest(const io::CsvTable& t) {
    t.require({"scan_id", "patient_id", "path", "edh", "sdh", "sah", "ivh", "iph"});
    std::vector<ManifestRow> rows;
    std::map<std::string, bool> seen;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        ManifestRow r;
        r.scan_id = t.cell(i, "scan_id");
        r.patient_id = t.cell(i, "patient_id");
        r.path = t.cell(i, "path");
        io::check_identifier(r.scan_id, "scan_id");
        io::check_identifier(r.patient_id, "patient_id");
        for (std::size_t k = 0; k < kNumTypes; ++k) r.labels[k] = parse_flag(t.cell(i, std::string(kTypeKeys[k])));
        if (seen[r.scan_id]) throw Error(ErrorKind::Data, "duplicate scan_id '" + r.scan_id + "' in manifest");
        seen[r.scan_id] = true;
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
    return parse_manifest(io::CsvTable::load(path));
}

inline std::string encode_manifest(const std::vector<ManifestRow>& rows) {
    io::CsvWriter w{"scan_id", "patient_id", "path", "edh", "sdh", "sah", "ivh", "iph"};
    for (const auto& r : rows) {
        std::vector<std::string> cells{r.scan_id, r.patient_id, r.path};
        for (bool b : r.labels) cells.push_back(b ? "1" : "0");
        w.row(cells);
    }
    return w.str();
}

// Per-slice label CSV: scan_id, slice_index, edh, sdh, sah, ivh, iph.
using SliceLabelMap = std::map<std::string, std::vector<TypeFlags>>;

inline SliceLabelMap parse_slice_labels(const io::CsvTable& t) {
    t.require({"scan_id", "slice_index", "edh", "sdh", "sah", "ivh", "iph"});
    SliceLabelMap out;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        auto& rows = out[t.cell(i, "scan_id")];
        const auto idx = parse_int(t.cell(i, "slice_index"));
        if (idx != static_cast<long long>(rows.size()))
            throw Error(ErrorKind::Data, t.origin() + ": slice indices for '" + t.cell(i, "scan_id") + "' must be 0..N-1 in order");
        TypeFlags f{};
        for (std::size_t k = 0; k < kNumTypes; ++k) f[k] = parse_flag(t.cell(i, std::string(kTypeKeys[k])));
        rows.push_back(f);
    }
    return out;
}

inline std::string encode_slice_labels(const std::vector<std::pair<std::string, std::vector<TypeFlags>>>& scans) {
    io::CsvWriter w{"scan_id", "slice_index", "edh", "sdh", "sah", "ivh", "iph"};
    for (const auto& [id, rows] : scans)
        for (std::size_t n = 0; n < rows.size(); ++n) {
            std::vector<std::string> cells{id, std::to_string(n)};
            for (bool b : rows[n]) cells.push_back(b ? "1" : "0");
            w.row(cells);
        }
    return w.str();
}

/// Loads every manifest volume; the manifest's labels become the scan labels
/// and per-slice labels are attached when provided.
inline std::vector<CtVolume> load_dataset(const std::vector<ManifestRow>& manifest, const std::filesystem::path& base_dir,
                                          const SliceLabelMap* slice_labels = nullptr) {
    std::vector<CtVolume> vols;
    vols.reserve(manifest.size());
    for (const auto& row : manifest) {
        std::filesystem::path p(row.path);
        if (p.is_relative()) p = base_dir / p;
        CtVolume v = load_volume(p);
        if (v.scan_id != row.scan_id)
            throw Error(ErrorKind::Data, "volume at '" + p.string() + "' has scan_id '" + v.scan_id + "', manifest says '" +
                                             row.scan_id + "'");
        v.patient_id = row.patient_id;
        ScanLabels labels;
        labels.scan = row.labels;
        if (slice_labels) {
            auto it = slice_labels->find(row.scan_id);
            if (it != slice_labels->end()) labels.slices = it->second;
        } else if (v.labels && v.labels->slices) {
            labels.slices = v.labels->slices;
        }
        v.labels = std::move(labels);
        v.validate();
        vols.push_back(std::move(v));
    }
    return vols;
}

}  // namespace ichtriage
