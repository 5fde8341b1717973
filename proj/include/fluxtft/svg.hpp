#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fluxtft/core/text.hpp"

namespace fluxtft::svg {

inline std::string escape(std::string_view s) {
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

/// Coordinates are printed with two decimals so output bytes do not depend
/// on shortest-representation formatting.
inline std::string num(double v) {
  if (std::abs(v) < 0.005) v = 0.0;
  return text::fixed(v, 2);
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                             "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  return p;
}

inline std::string color(std::size_t i) { return palette()[i % palette().size()]; }

/// Maps data ranges onto a plot rectangle.
struct Frame {
  double left = 70, top = 40, width = 560, height = 300;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double x(double v) const { return left + (v - x0) / (x1 - x0) * width; }
  double y(double v) const { return top + height - (v - y0) / (y1 - y0) * height; }
  double right() const { return left + width; }
  double bottom() const { return top + height; }
};

/// A "nice" upper bound >= v for axis ticks.
inline double nice_ceiling(double v) {
  if (!(v > 0)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= v) return m * mag;
  }
  return 10.0 * mag;
}

class Document {
 public:
  Document(double w, double h) : w_(w), h_(h) {}

  void raw(const std::string& s) { body_ << s << '\n'; }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
            const std::string& cls = "") {
    body_ << "<line" << cls_attr(cls) << " x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
          << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }

  void text(double x, double y, std::string_view s, const std::string& anchor = "start", double size = 12,
            const std::string& extra = "") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size) << "\" text-anchor=\""
          << anchor << "\"" << (extra.empty() ? "" : " " + extra) << ">" << escape(s) << "</text>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& cls = "") {
    body_ << "<rect" << cls_attr(cls) << " x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
          << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                const std::string& cls, const std::string& label) {
    body_ << "<polyline" << cls_attr(cls) << " data-label=\"" << escape(label) << "\" fill=\"none\" stroke=\"" << stroke
          << "\" stroke-width=\"" << num(width) << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    body_ << "\"/>\n";
  }

  /// Closed filled polygon as a path.
  void area(const std::vector<std::pair<double, double>>& pts, const std::string& fill, const std::string& label) {
    body_ << "<path class=\"area\" data-label=\"" << escape(label) << "\" fill=\"" << fill
          << "\" fill-opacity=\"0.85\" stroke=\"none\" d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      body_ << (i ? " L" : "M") << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body_ << " Z\"/>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(w_) << "\" height=\"" << num(h_)
       << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << num(w_) << "\" height=\"" << num(h_) << "\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  static std::string cls_attr(const std::string& cls) { return cls.empty() ? "" : " class=\"" + cls + "\""; }

  double w_, h_;
  std::ostringstream body_;
};

/// Axis lines, ticks and tick labels along the frame's left (or right) and
/// bottom edges.
inline void y_axis(Document& doc, const Frame& f, bool right_side, int ticks, const std::string& label,
                   const std::string& stroke = "#333333") {
  const double x = right_side ? f.right() : f.left;
  doc.line(x, f.top, x, f.bottom(), stroke, 1.0, "axis");
  for (int i = 0; i <= ticks; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / ticks;
    const double y = f.y(v);
    doc.line(x, y, x + (right_side ? 4 : -4), y, stroke, 1.0, "tick");
    doc.text(x + (right_side ? 7 : -7), y + 4, text::fixed(v, 3), right_side ? "start" : "end", 10);
  }
  const double lx = right_side ? f.right() + 55 : f.left - 52;
  const double ly = f.top + f.height / 2;
  doc.text(lx, ly, label, "middle", 12, "transform=\"rotate(-90 " + num(lx) + ' ' + num(ly) + ")\"");
}

inline void x_axis(Document& doc, const Frame& f, const std::vector<double>& ticks, const std::string& label) {
  doc.line(f.left, f.bottom(), f.right(), f.bottom(), "#333333", 1.0, "axis");
  for (double v : ticks) {
    const double x = f.x(v);
    doc.line(x, f.bottom(), x, f.bottom() + 4, "#333333", 1.0, "tick");
    doc.text(x, f.bottom() + 16, text::fixed(v, 0), "middle", 10);
  }
  doc.text(f.left + f.width / 2, f.bottom() + 34, label, "middle", 12);
}

/// Integer ticks over [x0, x1] at a step giving at most ~8 labels.
inline std::vector<double> integer_ticks(double x0, double x1) {
  const double span = std::max(1.0, x1 - x0);
  double step = 1;
  for (double s : {1.0, 2.0, 4.0, 6.0, 12.0, 24.0, 48.0, 72.0, 168.0, 336.0}) {
    step = s;
    if (span / s <= 8) break;
  }
  std::vector<double> out;
  const double first = std::ceil(x0 / step) * step;
  for (double v = first; v <= x1 + 1e-9; v += step) out.push_back(v);
  return out;
}

}  // namespace fluxtft::svg
