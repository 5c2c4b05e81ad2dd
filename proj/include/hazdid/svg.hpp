#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hazdid::svg {

struct Line {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = false;
};

struct Band {
  std::vector<double> x, lo, hi;
  std::string color = "#1f77b4";
  double opacity = 0.2;
};

// Minimal static line chart: shaded bands under lines, optional reference
// lines, linear axes with rounded ticks.
struct Chart {
  std::string title, x_label, y_label;
  std::vector<Line> lines;
  std::vector<Band> bands;
  std::optional<double> zero_line;
  std::optional<double> marker_x;  // vertical rule, e.g. at t*

  std::string render(int width = 640, int height = 400) const {
    const double left = 64, right = 150, top = 36, bottom = 48;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto extend = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
      for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
        if (!std::isfinite(ys[i])) continue;
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
      }
    };
    for (const auto& l : lines) extend(l.x, l.y);
    for (const auto& b : bands) {
      extend(b.x, b.lo);
      extend(b.x, b.hi);
    }
    if (zero_line) ymin = std::min(ymin, *zero_line), ymax = std::max(ymax, *zero_line);
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";

    for (double t : ticks(ymin, ymax)) {
      o << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(sy(t)) << "\" y2=\""
        << num(sy(t)) << "\" stroke=\"#eee\"/>\n";
      o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(t) + 4) << "\" text-anchor=\"end\">" << label(t)
        << "</text>\n";
    }
    for (double t : ticks(xmin, xmax)) {
      o << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << label(t)
        << "</text>\n";
    }
    o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
    o << "<text transform=\"translate(16," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";

    for (const auto& b : bands) {
      o << "<polygon fill=\"" << b.color << "\" fill-opacity=\"" << b.opacity << "\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < b.x.size(); ++i) o << num(sx(b.x[i])) << ',' << num(sy(b.hi[i])) << ' ';
      for (std::size_t i = b.x.size(); i-- > 0;) o << num(sx(b.x[i])) << ',' << num(sy(b.lo[i])) << ' ';
      o << "\"/>\n";
    }
    if (zero_line)
      o << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(sy(*zero_line))
        << "\" y2=\"" << num(sy(*zero_line)) << "\" stroke=\"#888\" stroke-dasharray=\"2,2\"/>\n";
    if (marker_x)
      o << "<line x1=\"" << num(sx(*marker_x)) << "\" x2=\"" << num(sx(*marker_x)) << "\" y1=\"" << num(top)
        << "\" y2=\"" << num(top + ph) << "\" stroke=\"#888\" stroke-dasharray=\"4,3\"/>\n";
    for (const auto& l : lines) {
      o << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"2\""
        << (l.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
      for (std::size_t i = 0; i < l.x.size() && i < l.y.size(); ++i)
        if (std::isfinite(l.y[i])) o << num(sx(l.x[i])) << ',' << num(sy(l.y[i])) << ' ';
      o << "\"/>\n";
      if (l.markers)
        for (std::size_t i = 0; i < l.x.size() && i < l.y.size(); ++i)
          if (std::isfinite(l.y[i]))
            o << "<circle cx=\"" << num(sx(l.x[i])) << "\" cy=\"" << num(sy(l.y[i])) << "\" r=\"3\" fill=\""
              << l.color << "\"/>\n";
    }
    double ly = top + 8;
    for (const auto& l : lines) {
      const double lx = left + pw + 12;
      o << "<line x1=\"" << num(lx) << "\" x2=\"" << num(lx + 22) << "\" y1=\"" << num(ly) << "\" y2=\"" << num(ly)
        << "\" stroke=\"" << l.color << "\" stroke-width=\"2\"" << (l.dashed ? " stroke-dasharray=\"6,4\"" : "")
        << "/>\n";
      o << "<text x=\"" << num(lx + 28) << "\" y=\"" << num(ly + 4) << "\">" << escape(l.label) << "</text>\n";
      ly += 18;
    }
    o << "</svg>\n";
    return o.str();
  }

 private:
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
  static std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
      }
    }
    return out;
  }
  static std::vector<double> ticks(double lo, double hi) {
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step) out.push_back(t);
    return out;
  }
};

}  // namespace hazdid::svg
