#pragma once

// Shared vocabulary for the triage pipeline: hemorrhage types, probability
// vectors, the error hierarchy, warnings, number formatting and seeded RNG.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ichtriage {

inline constexpr std::size_t kNumTypes = 5;

enum class HemorrhageType : std::size_t { EDH = 0, SDH = 1, SAH = 2, IVH = 3, IPH = 4 };

inline constexpr std::array<std::string_view, kNumTypes> kTypeKeys{"edh", "sdh", "sah", "ivh", "iph"};
inline constexpr std::array<std::string_view, kNumTypes> kTypeNames{"EDH", "SDH", "SAH", "IVH", "IPH"};

// Six evaluation labels: the five types followed by "any".
inline constexpr std::size_t kNumLabels = kNumTypes + 1;
inline constexpr std::size_t kAnyLabel = kNumTypes;
inline constexpr std::array<std::string_view, kNumLabels> kLabelNames{"EDH", "SDH", "SAH", "IVH", "IPH", "Any"};

enum class ErrorKind {
    InvalidWindow,
    Arity,
    Format,
    EmptyVolume,
    Data,
    Training,
    Infeasible,
    Configuration,
    UndefinedObjective,
    UndefinedAuc,
    Io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidWindow: return "invalid-window";
        case ErrorKind::Arity: return "arity";
        case ErrorKind::Format: return "format";
        case ErrorKind::EmptyVolume: return "empty-volume";
        case ErrorKind::Data: return "data";
        case ErrorKind::Training: return "training";
        case ErrorKind::Infeasible: return "infeasible";
        case ErrorKind::Configuration: return "configuration";
        case ErrorKind::UndefinedObjective: return "objective-undefined";
        case ErrorKind::UndefinedAuc: return "undefined-auc";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Warnings go through a process-wide sink so library code stays quiet in
// tests and the CLI can route them to stderr.
using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(detail::warning_mutex());
    auto previous = std::move(detail::warning_sink());
    detail::warning_sink() = std::move(sink);
    return previous;
}

inline void warn(const std::string& msg) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Five independent per-type probabilities, indexed in EDH..IPH order.
/// Components need not sum to one.
struct ProbVector {
    std::array<double, kNumTypes> p{};

    double& operator[](std::size_t k) { return p[k]; }
    double operator[](std::size_t k) const { return p[k]; }
    double& operator[](HemorrhageType t) { return p[static_cast<std::size_t>(t)]; }
    double operator[](HemorrhageType t) const { return p[static_cast<std::size_t>(t)]; }

    bool valid() const {
        for (double v : p)
            if (!(v >= 0.0 && v <= 1.0)) return false;
        return true;
    }

    friend bool operator==(const ProbVector&, const ProbVector&) = default;
};

using TypeFlags = std::array<bool, kNumTypes>;

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clip(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::Format, "not a number: '" + std::string(s) + "'");
    return v;
}

inline long long parse_int(std::string_view s) {
    long long v = 0;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::Format, "not an integer: '" + std::string(s) + "'");
    return v;
}

inline bool parse_flag(std::string_view s) {
    const auto v = parse_int(s);
    if (v != 0 && v != 1) throw Error(ErrorKind::Format, "expected 0/1, got '" + std::string(s) + "'");
    return v == 1;
}

/// Seeded generator with platform-independent derived distributions.
/// std::mt19937_64's raw stream is fixed by the standard; the distribution
/// helpers below avoid the implementation-defined std:: distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do x = next();
        while (x >= limit);
        return x % n;
    }

    long long integer(long long lo, long long hi) {
        return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do u1 = uniform();
        while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    r.next();
    return r.next();
}

}  // namespace ichtriage
