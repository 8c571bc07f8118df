#pragma once

// Per-slice classification: the pluggable classifier interface, handcrafted
// windowed-intensity features, the boosted-tree reference classifier, and
// probability-vector averaging across classifiers.

#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ichtriage/core.hpp"
#include "ichtriage/gbdt.hpp"
#include "ichtriage/io.hpp"
#include "ichtriage/metrics.hpp"
#include "ichtriage/volume.hpp"

namespace ichtriage {

class SliceClassifier {
public:
    virtual ~SliceClassifier() = default;
    virtual ProbVector classify(const ChannelImage& image) const = 0;
    virtual std::string identity() const = 0;
};

using ClassifierPtr = std::shared_ptr<const SliceClassifier>;

inline ProbVector ensemble_average(std::span<const ProbVector> vectors) {
    if (vectors.empty()) throw Error(ErrorKind::Arity, "cannot average an empty list of probability vectors");
    ProbVector out;
    for (const auto& v : vectors)
        for (std::size_t k = 0; k < kNumTypes; ++k) out[k] += v[k];
    for (std::size_t k = 0; k < kNumTypes; ++k) out[k] = clip(out[k] / static_cast<double>(vectors.size()), 0.0, 1.0);
    return out;
}

/// Equal-weight average of several classifiers (or checkpoints of one).
class AveragedClassifier final : public SliceClassifier {
public:
    explicit AveragedClassifier(std::vector<ClassifierPtr> members) : members_(std::move(members)) {
        if (members_.empty()) throw Error(ErrorKind::Arity, "averaged classifier needs at least one member");
    }

    ProbVector classify(const ChannelImage& image) const override {
        std::vector<ProbVector> outs;
        outs.reserve(members_.size());
        for (const auto& m : members_) outs.push_back(m->classify(image));
        return ensemble_average(outs);
    }

    std::string identity() const override {
        std::string id = "average(";
        for (std::size_t i = 0; i < members_.size(); ++i) id += (i ? "," : "") + members_[i]->identity();
        return id + ")";
    }

private:
    std::vector<ClassifierPtr> members_;
};

inline std::vector<ProbVector> predict_slices(const CtVolume& volume, std::span<const ClassifierPtr> classifiers,
                                              std::span<const WindowSpec> specs) {
    if (classifiers.empty()) throw Error(ErrorKind::Arity, "at least one slice classifier is required");
    std::vector<ProbVector> rows;
    rows.reserve(volume.num_slices());
    std::vector<ProbVector> outs(classifiers.size());
    for (std::size_t n = 0; n < volume.num_slices(); ++n) {
        auto image = stack_channels(volume.slice(n), specs);
        image.position = static_cast<double>(n + 1) / static_cast<double>(volume.num_slices());
        for (std::size_t c = 0; c < classifiers.size(); ++c) outs[c] = classifiers[c]->classify(image);
        rows.push_back(ensemble_average(outs));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Handcrafted features. Per channel: 16-bin histogram counts over [0,1],
// mean, standard deviation, 5th/50th/95th percentiles and the fraction of
// pixels in the blood-like band [0.55, 0.95]. Then the slice position.

inline constexpr std::size_t kHistogramBins = 16;
inline constexpr std::size_t kPerChannelFeatures = kHistogramBins + 6;
inline constexpr std::size_t kSliceFeatureCount = 3 * kPerChannelFeatures + 1;
inline constexpr double kBloodBandLow = 0.55;
inline constexpr double kBloodBandHigh = 0.95;

inline std::vector<double> extract_features(const ChannelImage& image) {
    if (image.data.size() != ChannelImage::kChannels * image.plane() || image.plane() == 0)
        throw Error(ErrorKind::Arity, "channel image has inconsistent dimensions");
    std::vector<double> f;
    f.reserve(kSliceFeatureCount);
    std::vector<double> sorted;
    for (std::size_t c = 0; c < ChannelImage::kChannels; ++c) {
        const auto ch = image.channel(c);
        std::array<double, kHistogramBins> hist{};
        double sum = 0.0, band = 0.0;
        for (double v : ch) {
            if (!std::isfinite(v)) throw Error(ErrorKind::Data, "non-finite pixel value");
            const auto bin = std::min<std::size_t>(kHistogramBins - 1, static_cast<std::size_t>(clip(v, 0.0, 1.0) * kHistogramBins));
            hist[bin] += 1.0;
            sum += v;
            if (v >= kBloodBandLow && v <= kBloodBandHigh) band += 1.0;
        }
        const double n = static_cast<double>(ch.size());
        const double mean = sum / n;
        double var = 0.0;
        for (double v : ch) var += (v - mean) * (v - mean);
        sorted.assign(ch.begin(), ch.end());
        std::sort(sorted.begin(), sorted.end());
        f.insert(f.end(), hist.begin(), hist.end());
        f.push_back(mean);
        f.push_back(std::sqrt(var / n));
        f.push_back(metrics::sorted_quantile(sorted, 0.05));
        f.push_back(metrics::sorted_quantile(sorted, 0.50));
        f.push_back(metrics::sorted_quantile(sorted, 0.95));
        f.push_back(band / n);
    }
    f.push_back(image.position);
    return f;
}

// ---------------------------------------------------------------------------

inline constexpr double kFallbackClip = 1e-6;

inline gbdt::Config default_reference_config(std::uint64_t seed = 0) {
    gbdt::Config c;
    c.name = "reference";
    c.rounds = 60;
    c.learning_rate = 0.1;
    c.growth = gbdt::Growth::Depthwise;
    c.max_depth = 4;
    c.max_leaves = 16;
    c.min_samples_leaf = 5;
    c.feature_subsample = 0.8;
    c.l2_reg = 1.0;
    c.seed = seed;
    return c;
}

/// One-vs-rest boosted-tree model per type over extract_features output.
class ReferenceClassifier final : public SliceClassifier {
public:
    ReferenceClassifier() = default;
    explicit ReferenceClassifier(std::array<gbdt::Model, kNumTypes> models) : models_(std::move(models)) {}

    ProbVector classify(const ChannelImage& image) const override { return classify_features(extract_features(image)); }

    ProbVector classify_features(std::span<const double> features) const {
        ProbVector p;
        for (std::size_t k = 0; k < kNumTypes; ++k) p[k] = gbdt::predict(models_[k], features);
        return p;
    }

    std::string identity() const override {
        std::size_t trees = 0;
        for (const auto& m : models_) trees += m.trees.size();
        return "reference-gbdt/v1/trees=" + std::to_string(trees);
    }

    const std::array<gbdt::Model, kNumTypes>& models() const { return models_; }

    friend bool operator==(const ReferenceClassifier& a, const ReferenceClassifier& b) { return a.models_ == b.models_; }

private:
    std::array<gbdt::Model, kNumTypes> models_;
};

inline ReferenceClassifier train_reference_classifier(const gbdt::FeatureMatrix& features, const std::vector<TypeFlags>& labels,
                                                      const gbdt::Config& config) {
    if (features.rows() == 0) throw Error(ErrorKind::Training, "reference classifier training set is empty");
    if (labels.size() != features.rows()) throw Error(ErrorKind::Arity, "label count differs from feature rows");
    std::array<gbdt::Model, kNumTypes> models;
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        const auto y = gbdt::type_column(labels, k);
        std::size_t pos = 0;
        for (auto v : y) pos += v;
        if (pos == 0 || pos == y.size()) {
            warn(std::string(kTypeNames[k]) + ": only one label value in training data; using base-rate output");
            models[k] = gbdt::constant_model(features.cols(),
                                             clip(static_cast<double>(pos) / static_cast<double>(y.size()), kFallbackClip, 1.0 - kFallbackClip));
            continue;
        }
        gbdt::Config c = config;
        c.seed = derive_seed(config.seed, k);
        models[k] = gbdt::train(features, y, c);
    }
    return ReferenceClassifier(std::move(models));
}

struct SliceTrainingSet {
    gbdt::FeatureMatrix features;
    std::vector<TypeFlags> labels;
};

inline const std::vector<TypeFlags>& slice_labels_or_broadcast(const CtVolume& v, std::vector<TypeFlags>& scratch) {
    if (!v.labels) throw Error(ErrorKind::Data, "volume '" + v.scan_id + "' has no labels");
    if (v.labels->slices) return *v.labels->slices;
    warn("scan '" + v.scan_id + "' has scan-level labels only; broadcasting to every slice");
    scratch.assign(v.num_slices(), v.labels->scan);
    return scratch;
}

inline SliceTrainingSet build_slice_training_set(std::span<const CtVolume* const> volumes, std::span<const WindowSpec> specs) {
    SliceTrainingSet set;
    std::vector<TypeFlags> scratch;
    for (const auto* v : volumes) {
        const auto& labels = slice_labels_or_broadcast(*v, scratch);
        for (std::size_t n = 0; n < v->num_slices(); ++n) {
            auto image = stack_channels(v->slice(n), specs);
            image.position = static_cast<double>(n + 1) / static_cast<double>(v->num_slices());
            set.features.push_row(extract_features(image));
            set.labels.push_back(labels[n]);
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Persistence of the reference classifier.

inline std::string encode_reference_classifier(const ReferenceClassifier& c, std::span<const WindowSpec> specs) {
    std::ostringstream out;
    out << "slice-classifier reference 1\n";
    out << "windows " << specs.size();
    for (const auto& s : specs) out << ' ' << format_double(s.center) << ' ' << format_double(s.width);
    out << '\n';
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        out << "type " << kTypeKeys[k] << '\n';
        gbdt::write_model(out, c.models()[k]);
    }
    out << "end-slice-classifier\n";
    return out.str();
}

struct LoadedReferenceClassifier {
    ReferenceClassifier classifier;
    std::vector<WindowSpec> windows;
};

inline LoadedReferenceClassifier decode_reference_classifier(const std::string& text) {
    std::istringstream in(text);
    gbdt::detail::TokenReader r(in);
    r.expect("slice-classifier");
    r.expect("reference");
    if (r.integer() != 1) throw Error(ErrorKind::Format, "unsupported slice-classifier version");
    r.expect("windows");
    LoadedReferenceClassifier out;
    const auto nw = r.integer();
    for (long long i = 0; i < nw; ++i) {
        WindowSpec s;
        s.center = r.real();
        s.width = r.real();
        validate_window(s);
        out.windows.push_back(s);
    }
    std::array<gbdt::Model, kNumTypes> models;
    for (std::size_t k = 0; k < kNumTypes; ++k) {
        r.expect("type");
        r.expect(kTypeKeys[k]);
        models[k] = gbdt::read_model(in);
        if (models[k].num_features != kSliceFeatureCount) throw Error(ErrorKind::Format, "slice model has wrong feature count");
    }
    r.expect("end-slice-classifier");
    out.classifier = ReferenceClassifier(std::move(models));
    return out;
}

// ---------------------------------------------------------------------------
// Slice-probability exchange CSV: scan_id, slice_index, p_edh, ..., p_iph.

struct ScanProbabilities {
    std::string scan_id;
    std::vector<ProbVector> rows;

    friend bool operator==(const ScanProbabilities&, const ScanProbabilities&) = default;
};

inline std::string encode_slice_probabilities(std::span<const ScanProbabilities> scans) {
    io::CsvWriter w{"scan_id", "slice_index", "p_edh", "p_sdh", "p_sah", "p_ivh", "p_iph"};
    for (const auto& s : scans)
        for (std::size_t n = 0; n < s.rows.size(); ++n) {
            std::vector<std::string> cells{s.scan_id, std::to_string(n)};
            for (std::size_t k = 0; k < kNumTypes; ++k) cells.push_back(format_double(s.rows[n][k]));
            w.row(cells);
        }
    return w.str();
}

inline std::vector<ScanProbabilities> parse_slice_probabilities(const io::CsvTable& t) {
    t.require({"scan_id", "slice_index", "p_edh", "p_sdh", "p_sah", "p_ivh", "p_iph"});
    std::vector<ScanProbabilities> out;
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto& id = t.cell(i, "scan_id");
        auto it = where.find(id);
        if (it == where.end()) {
            it = where.emplace(id, out.size()).first;
            out.push_back({id, {}});
        } else if (it->second + 1 != out.size()) {
            throw Error(ErrorKind::Data, t.origin() + ": rows for scan '" + id + "' are not contiguous");
        }
        auto& scan = out[it->second];
        if (parse_int(t.cell(i, "slice_index")) != static_cast<long long>(scan.rows.size()))
            throw Error(ErrorKind::Data, t.origin() + ": slice indices for '" + id + "' must run 0..N-1 in order");
        ProbVector p;
        for (std::size_t k = 0; k < kNumTypes; ++k) p[k] = parse_double(t.cell(i, "p_" + std::string(kTypeKeys[k])));
        if (!p.valid()) throw Error(ErrorKind::Data, t.origin() + ": probability outside [0,1] for '" + id + "'");
        scan.rows.push_back(p);
    }
    return out;
}

inline std::vector<ScanProbabilities> load_slice_probabilities(const std::filesystem::path& path) {
    return parse_slice_probabilities(io::CsvTable::load(path));
}

}  // namespace ichtriage
