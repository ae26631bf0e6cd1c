#ifndef SDMRAC_PLOT_HPP
#define SDMRAC_PLOT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdmrac::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

/// Shaded region between lo and hi.
struct Band {
  std::string label;
  std::vector<double> x;
  std::vector<double> lo;
  std::vector<double> hi;
  std::string color = "#1f77b4";
};

struct Panel {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Band> bands;
  std::vector<Series> series;
  bool legend = true;
};

struct Figure {
  std::string title;
  std::vector<Panel> panels;
  double width = 900.0;
  double panel_height = 280.0;
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v, double step) {
  char buf[32];
  if (std::abs(v) < step * 1e-6) v = 0.0;
  const int digits = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
  if (std::abs(v) >= 1e4 || (v != 0.0 && std::abs(v) < 1e-3))
    std::snprintf(buf, sizeof buf, "%.2g", v);
  else
    std::snprintf(buf, sizeof buf, "%.*f", std::min(digits, 6), v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline double nice_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0;
  return nice * mag;
}

/// Min/max bucketing down to about `max_points`, keeping the visual envelope.
inline std::vector<std::size_t> decimate(const std::vector<double>& y, std::size_t max_points) {
  std::vector<std::size_t> idx;
  const std::size_t n = y.size();
  if (n <= max_points) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  const std::size_t buckets = std::max<std::size_t>(1, max_points / 2);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * n / buckets;
    const std::size_t hi = std::max(lo + 1, (b + 1) * n / buckets);
    std::size_t imin = lo, imax = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (y[i] < y[imin]) imin = i;
      if (y[i] > y[imax]) imax = i;
    }
    idx.push_back(std::min(imin, imax));
    if (imin != imax) idx.push_back(std::max(imin, imax));
  }
  return idx;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      const double pad = std::max(1e-3, std::abs(hi) * 0.1);
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace detail

/// Renders the figure as a standalone SVG document. Output depends only on the inputs.
inline std::string to_svg(const Figure& fig, std::size_t max_points = 2000) {
  using detail::num;
  const double left = 80.0, right = 170.0, top_title = fig.title.empty() ? 10.0 : 36.0;
  const double pad_top = 28.0, pad_bottom = 44.0;
  const double height = top_title + static_cast<double>(fig.panels.size()) * fig.panel_height + 10.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(fig.width) << "\" height=\"" << num(height)
     << "\" viewBox=\"0 0 " << num(fig.width) << " " << num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!fig.title.empty())
    os << "<text x=\"" << num(fig.width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << detail::escape(fig.title) << "</text>\n";

  for (std::size_t p = 0; p < fig.panels.size(); ++p) {
    const Panel& panel = fig.panels[p];
    const double y0 = top_title + static_cast<double>(p) * fig.panel_height;
    const double px0 = left, px1 = fig.width - right;
    const double py0 = y0 + pad_top, py1 = y0 + fig.panel_height - pad_bottom;

    detail::Range xr, yr;
    for (const auto& s : panel.series) {
      for (double v : s.x) xr.add(v);
      for (double v : s.y) yr.add(v);
    }
    for (const auto& b : panel.bands) {
      for (double v : b.x) xr.add(v);
      for (double v : b.lo) yr.add(v);
      for (double v : b.hi) yr.add(v);
    }
    xr.finish();
    yr.finish();
    const double ypad = 0.05 * (yr.hi - yr.lo);
    yr.lo -= ypad;
    yr.hi += ypad;
    const auto sx = [&](double v) { return px0 + (v - xr.lo) / (xr.hi - xr.lo) * (px1 - px0); };
    const auto sy = [&](double v) {
      v = std::clamp(v, yr.lo, yr.hi);
      return py1 - (v - yr.lo) / (yr.hi - yr.lo) * (py1 - py0);
    };

    os << "<g>\n";
    if (!panel.title.empty())
      os << "<text x=\"" << num((px0 + px1) / 2) << "\" y=\"" << num(y0 + 18) << "\" text-anchor=\"middle\" font-size=\"13\">"
         << detail::escape(panel.title) << "</text>\n";
    os << "<rect x=\"" << num(px0) << "\" y=\"" << num(py0) << "\" width=\"" << num(px1 - px0) << "\" height=\""
       << num(py1 - py0) << "\" fill=\"none\" stroke=\"#333\"/>\n";

    const double xs = detail::nice_step(xr.hi - xr.lo, 8);
    for (double v = std::ceil(xr.lo / xs) * xs; v <= xr.hi + 1e-9 * xs; v += xs) {
      os << "<line x1=\"" << num(sx(v)) << "\" y1=\"" << num(py0) << "\" x2=\"" << num(sx(v)) << "\" y2=\"" << num(py1)
         << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << num(sx(v)) << "\" y=\"" << num(py1 + 16) << "\" text-anchor=\"middle\">"
         << detail::tick_label(v, xs) << "</text>\n";
    }
    const double ys = detail::nice_step(yr.hi - yr.lo, 5);
    for (double v = std::ceil(yr.lo / ys) * ys; v <= yr.hi + 1e-9 * ys; v += ys) {
      os << "<line x1=\"" << num(px0) << "\" y1=\"" << num(sy(v)) << "\" x2=\"" << num(px1) << "\" y2=\"" << num(sy(v))
         << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << num(px0 - 6) << "\" y=\"" << num(sy(v) + 4) << "\" text-anchor=\"end\">"
         << detail::tick_label(v, ys) << "</text>\n";
    }
    if (!panel.xlabel.empty())
      os << "<text x=\"" << num((px0 + px1) / 2) << "\" y=\"" << num(py1 + 34) << "\" text-anchor=\"middle\">"
         << detail::escape(panel.xlabel) << "</text>\n";
    if (!panel.ylabel.empty())
      os << "<text transform=\"translate(" << num(px0 - 58) << "," << num((py0 + py1) / 2)
         << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(panel.ylabel) << "</text>\n";

    for (const auto& b : panel.bands) {
      const std::size_t n = std::min({b.x.size(), b.lo.size(), b.hi.size()});
      if (n == 0) continue;
      std::vector<double> width(n);
      for (std::size_t i = 0; i < n; ++i) width[i] = b.hi[i] - b.lo[i];
      const auto idx = detail::decimate(width, max_points);
      os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
      for (std::size_t i : idx) os << num(sx(b.x[i])) << "," << num(sy(b.hi[i])) << " ";
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) os << num(sx(b.x[*it])) << "," << num(sy(b.lo[*it])) << " ";
      os << "\"/>\n";
    }
    for (const auto& s : panel.series) {
      const std::size_t n = std::min(s.x.size(), s.y.size());
      if (n == 0) continue;
      std::vector<double> y(s.y.begin(), s.y.begin() + static_cast<std::ptrdiff_t>(n));
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\""
         << (s.dashed ? " stroke-dasharray=\"6,3\"" : "") << " points=\"";
      for (std::size_t i : detail::decimate(y, max_points)) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        os << num(sx(s.x[i])) << "," << num(sy(s.y[i])) << " ";
      }
      os << "\"/>\n";
    }

    if (panel.legend) {
      double ly = py0 + 10;
      const double lx = px1 + 12;
      const auto entry = [&](const std::string& label, const std::string& color, bool dashed, bool filled) {
        if (label.empty()) return;
        if (filled)
          os << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 6) << "\" width=\"20\" height=\"10\" fill=\"" << color
             << "\" fill-opacity=\"0.25\"/>\n";
        else
          os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\"" << num(ly)
             << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"6,3\"" : "")
             << "/>\n";
        os << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 4) << "\">" << detail::escape(label) << "</text>\n";
        ly += 16;
      };
      for (const auto& s : panel.series) entry(s.label, s.color, s.dashed, false);
      for (const auto& b : panel.bands) entry(b.label, b.color, false, true);
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_svg(const std::string& path, const Figure& fig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_svg(fig);
}

}  // namespace sdmrac::plot

#endif  // SDMRAC_PLOT_HPP
