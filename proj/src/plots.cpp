#include "tadlab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tadlab/common.hpp"

namespace tadlab::eval {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 48.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr std::size_t kPaletteSize = 8;

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

// Pads degenerate ranges so the scale never divides by zero.
Range pad_range(double lo, double hi) {
    if (!(std::isfinite(lo) && std::isfinite(hi))) throw NumericError("plot: non-finite data range");
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 1e-12) {
        const double pad = std::max(1.0, std::abs(hi)) * 0.1;
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

struct Scale {
    Range r;
    double px_lo;
    double px_hi;
    double at(double v) const { return px_lo + (v - r.lo) / (r.hi - r.lo) * (px_hi - px_lo); }
};

void open_svg(std::ostringstream& os, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << escape_xml(title) << "</text>\n";
}

void draw_axes(std::ostringstream& os, const Scale& ys, const std::string& y_label) {
    const double x0 = kLeft;
    const double x1 = kWidth - kRight;
    const double y0 = kHeight - kBottom;
    const double y1 = kTop;
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = ys.r.lo + (ys.r.hi - ys.r.lo) * t / 4.0;
        const double py = ys.at(v);
        os << "<line x1=\"" << x0 - 4 << "\" y1=\"" << py << "\" x2=\"" << x0 << "\" y2=\"" << py
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x0 - 8 << "\" y=\"" << py + 4
           << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(v) << "</text>\n";
    }
    os << "<text x=\"14\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" font-size=\"11\" "
       << "transform=\"rotate(-90 14 " << (y0 + y1) / 2 << ")\">" << escape_xml(y_label)
       << "</text>\n";
}

// Linear-interpolation quantile over a sorted copy.
double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::string svg_box_plot(const std::string& title, const std::vector<std::string>& names,
                         const std::vector<std::vector<double>>& samples,
                         const std::string& y_label) {
    if (names.size() != samples.size()) throw ContractError("svg_box_plot: names/samples size mismatch");
    if (samples.empty()) throw ContractError("svg_box_plot: no groups");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : samples) {
        if (s.empty()) throw ContractError("svg_box_plot: empty group");
        for (double v : s) {
            if (!std::isfinite(v)) throw NumericError("svg_box_plot: non-finite sample");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    std::ostringstream os;
    open_svg(os, title);
    Scale ys{pad_range(lo, hi), kHeight - kBottom, kTop};
    draw_axes(os, ys, y_label);
    const double span = (kWidth - kLeft - kRight) / static_cast<double>(samples.size());
    const double box_w = std::min(48.0, span * 0.5);
    for (std::size_t g = 0; g < samples.size(); ++g) {
        const double cx = kLeft + span * (static_cast<double>(g) + 0.5);
        const auto& s = samples[g];
        const double q1 = quantile(s, 0.25);
        const double q2 = quantile(s, 0.50);
        const double q3 = quantile(s, 0.75);
        const double smin = *std::min_element(s.begin(), s.end());
        const double smax = *std::max_element(s.begin(), s.end());
        const char* color = kPalette[g % kPaletteSize];
        os << "<line x1=\"" << cx << "\" y1=\"" << ys.at(smin) << "\" x2=\"" << cx << "\" y2=\""
           << ys.at(smax) << "\" stroke=\"black\"/>\n";
        for (double w : {smin, smax}) {
            os << "<line x1=\"" << cx - box_w / 4 << "\" y1=\"" << ys.at(w) << "\" x2=\""
               << cx + box_w / 4 << "\" y2=\"" << ys.at(w) << "\" stroke=\"black\"/>\n";
        }
        os << "<rect x=\"" << cx - box_w / 2 << "\" y=\"" << ys.at(q3) << "\" width=\"" << box_w
           << "\" height=\"" << ys.at(q1) - ys.at(q3) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.5\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << cx - box_w / 2 << "\" y1=\"" << ys.at(q2) << "\" x2=\""
           << cx + box_w / 2 << "\" y2=\"" << ys.at(q2) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << escape_xml(names[g]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label) {
    if (series.empty()) throw ContractError("svg_line_plot: no series");
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ContractError("svg_line_plot: x/y size mismatch");
        if (s.x.empty()) throw ContractError("svg_line_plot: empty series");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(std::isfinite(s.x[i]) && std::isfinite(s.y[i])))
                throw NumericError("svg_line_plot: non-finite point");
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    std::ostringstream os;
    open_svg(os, title);
    Scale xs{pad_range(xlo, xhi), kLeft, kWidth - kRight};
    Scale ys{pad_range(ylo, yhi), kHeight - kBottom, kTop};
    draw_axes(os, ys, y_label);
    for (int t = 0; t <= 4; ++t) {
        const double v = xs.r.lo + (xs.r.hi - xs.r.lo) * t / 4.0;
        const double px = xs.at(v);
        os << "<line x1=\"" << px << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << px << "\" y2=\""
           << kHeight - kBottom + 4 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << px << "\" y=\"" << kHeight - kBottom + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(v) << "</text>\n";
    }
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 8
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape_xml(x_label) << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) os << ' ';
            os << xs.at(s.x[i]) << ',' << ys.at(s.y[i]);
        }
        os << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            os << "<circle cx=\"" << xs.at(s.x[i]) << "\" cy=\"" << ys.at(s.y[i])
               << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        const double ly = kTop + 14.0 * static_cast<double>(si);
        os << "<rect x=\"" << kWidth - kRight - 130 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 116 << "\" y=\"" << ly + 9
           << "\" font-size=\"10\">" << escape_xml(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_bar_plot(const std::string& title, const std::vector<std::string>& names,
                         const std::vector<double>& values, const std::string& y_label) {
    if (names.size() != values.size()) throw ContractError("svg_bar_plot: names/values size mismatch");
    if (values.empty()) throw ContractError("svg_bar_plot: no bars");
    double lo = 0.0, hi = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("svg_bar_plot: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::ostringstream os;
    open_svg(os, title);
    Scale ys{pad_range(lo, hi), kHeight - kBottom, kTop};
    draw_axes(os, ys, y_label);
    const double span = (kWidth - kLeft - kRight) / static_cast<double>(values.size());
    const double bar_w = std::min(56.0, span * 0.6);
    const double base = ys.at(std::max(0.0, ys.r.lo));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double cx = kLeft + span * (static_cast<double>(i) + 0.5);
        const double top = ys.at(values[i]);
        const char* color = kPalette[i % kPaletteSize];
        os << "<rect x=\"" << cx - bar_w / 2 << "\" y=\"" << std::min(top, base) << "\" width=\"" << bar_w
           << "\" height=\"" << std::abs(base - top) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.8\" stroke=\"black\"/>\n";
        os << "<text x=\"" << cx << "\" y=\"" << std::min(top, base) - 4
           << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(values[i]) << "</text>\n";
        os << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << escape_xml(names[i]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace tadlab::eval
