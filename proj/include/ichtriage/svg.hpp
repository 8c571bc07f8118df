#pragma once

// Static SVG figures: polylines on a box axis, box plots and interval plots.
// Output is plain text with fixed-precision coordinates, so it is stable
// across runs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ichtriage/metrics.hpp"

namespace ichtriage::svg {

struct Axes {
    std::string title;
    std::string x_label;
    std::string y_label;
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;
};

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    int colour = -1;  // palette index; -1 uses the series position
    bool dashed = false;
};

struct Box {
    std::string name;
    std::optional<metrics::BoxStats> stats;  // empty groups draw only their label
};

struct Interval {
    std::string name;
    double value = 0.0;
    double half_width = 0.0;
};

namespace detail {

inline constexpr double kWidth = 640, kHeight = 480;
inline constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline const char* colour(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

class Canvas {
public:
    explicit Canvas(Axes axes) : a_(std::move(axes)) {
        if (!(a_.x1 > a_.x0)) a_.x1 = a_.x0 + 1.0;
        if (!(a_.y1 > a_.y0)) a_.y1 = a_.y0 + 1.0;
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
             << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out_ << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(a_.title) << "</text>\n";
        frame();
    }

    double x(double v) const { return kLeft + (v - a_.x0) / (a_.x1 - a_.x0) * (kWidth - kLeft - kRight); }
    double y(double v) const { return kHeight - kBottom - (v - a_.y0) / (a_.y1 - a_.y0) * (kHeight - kTop - kBottom); }

    void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke, const char* extra = "") {
        out_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"" << extra << " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) out_ << (i ? " " : "") << num(x(pts[i].first)) << ',' << num(y(pts[i].second));
        out_ << "\"/>\n";
    }

    void line(double xa, double ya, double xb, double yb, const char* stroke) {
        out_ << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xb) << "\" y2=\"" << num(yb) << "\" stroke=\""
             << stroke << "\"/>\n";
    }

    void rect(double xa, double ya, double xb, double yb, const char* stroke) {
        out_ << "<rect x=\"" << num(std::min(xa, xb)) << "\" y=\"" << num(std::min(ya, yb)) << "\" width=\"" << num(std::abs(xb - xa))
             << "\" height=\"" << num(std::abs(yb - ya)) << "\" fill=\"none\" stroke=\"" << stroke << "\"/>\n";
    }

    void circle(double cx, double cy, double r, const char* fill) {
        out_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" fill=\"" << fill << "\"/>\n";
    }

    void text(double tx, double ty, const std::string& s, const char* anchor = "start") {
        out_ << "<text x=\"" << num(tx) << "\" y=\"" << num(ty) << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
    }

    void legend(std::size_t i, const std::string& name, const char* stroke, const char* extra = "") {
        const double ly = kTop + 10 + 18 * static_cast<double>(i), lx = kWidth - kRight + 12;
        out_ << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\"" << num(ly)
             << "\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"" << extra << "/>\n";
        text(lx + 26, ly + 4, name);
    }

    void numeric_x_ticks() {
        const double b = kHeight - kBottom;
        for (int i = 0; i <= 4; ++i) {
            const double vx = a_.x0 + (a_.x1 - a_.x0) * i / 4.0;
            line(x(vx), b, x(vx), b + 4, "black");
            text(x(vx), b + 16, tick(vx), "middle");
        }
    }

    // Category ticks along x in place of numeric ones.
    void category(double v, const std::string& name, double dy = 0.0) { text(x(v), kHeight - kBottom + 16 + dy, name, "middle"); }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    void frame() {
        const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
        out_ << "<rect x=\"" << num(l) << "\" y=\"" << num(t) << "\" width=\"" << num(r - l) << "\" height=\"" << num(b - t)
             << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double vy = a_.y0 + (a_.y1 - a_.y0) * i / 4.0;
            line(l - 4, y(vy), l, y(vy), "black");
            text(l - 6, y(vy) + 4, tick(vy), "end");
        }
        text((l + r) / 2, kHeight - 16, a_.x_label, "middle");
        out_ << "<text x=\"18\" y=\"" << num((t + b) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << num((t + b) / 2)
             << ")\">" << escape(a_.y_label) << "</text>\n";
    }

    Axes a_;
    std::ostringstream out_;
};

}  // namespace detail

inline std::string line_plot(const Axes& axes, std::span<const Series> series, bool diagonal = false) {
    detail::Canvas c(axes);
    c.numeric_x_ticks();
    if (diagonal) c.polyline({{axes.x0, axes.y0}, {axes.x1, axes.y1}}, "#999999", " stroke-dasharray=\"4 4\"");
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* col = detail::colour(s.colour < 0 ? i : static_cast<std::size_t>(s.colour));
        const char* extra = s.dashed ? " stroke-dasharray=\"5 3\"" : "";
        c.polyline(s.points, col, extra);
        c.legend(i, s.name, col, extra);
    }
    return c.finish();
}

inline std::string box_plot(const Axes& axes, std::span<const Box> boxes) {
    Axes a = axes;
    a.x0 = 0.0;
    a.x1 = static_cast<double>(std::max<std::size_t>(boxes.size(), 1));
    detail::Canvas c(a);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const double mid = static_cast<double>(i) + 0.5;
        c.category(mid, boxes[i].name, boxes.size() > 8 && i % 2 ? 14.0 : 0.0);
        if (!boxes[i].stats) continue;
        const auto& s = *boxes[i].stats;
        const double xl = c.x(mid - 0.3), xr = c.x(mid + 0.3), xm = c.x(mid);
        const char* col = detail::colour(i / 2);
        c.rect(xl, c.y(s.q1), xr, c.y(s.q3), col);
        c.line(xl, c.y(s.median), xr, c.y(s.median), col);
        c.line(xm, c.y(s.q3), xm, c.y(s.whisker_high), col);
        c.line(xm, c.y(s.q1), xm, c.y(s.whisker_low), col);
        c.line(c.x(mid - 0.15), c.y(s.whisker_high), c.x(mid + 0.15), c.y(s.whisker_high), col);
        c.line(c.x(mid - 0.15), c.y(s.whisker_low), c.x(mid + 0.15), c.y(s.whisker_low), col);
        for (double o : s.outliers) c.circle(xm, c.y(o), 2.0, col);
    }
    return c.finish();
}

inline std::string interval_plot(const Axes& axes, std::span<const Interval> rows) {
    Axes a = axes;
    a.x0 = 0.0;
    a.x1 = static_cast<double>(std::max<std::size_t>(rows.size(), 1));
    detail::Canvas c(a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double mid = static_cast<double>(i) + 0.5;
        const double lo = std::max(a.y0, r.value - r.half_width), hi = std::min(a.y1, r.value + r.half_width);
        const char* col = detail::colour(i);
        c.line(c.x(mid), c.y(lo), c.x(mid), c.y(hi), col);
        c.line(c.x(mid - 0.12), c.y(lo), c.x(mid + 0.12), c.y(lo), col);
        c.line(c.x(mid - 0.12), c.y(hi), c.x(mid + 0.12), c.y(hi), col);
        c.circle(c.x(mid), c.y(r.value), 3.0, col);
        c.category(mid, r.name);
    }
    return c.finish();
}

}  // namespace ichtriage::svg
