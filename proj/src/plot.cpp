#include "eqm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "eqm/error.hpp"

namespace eqm::plot {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 40.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  if (!std::isfinite(v)) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

// Maps data coordinates into the plot area (y up).
struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double py(double y) const {
    return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin);
  }
};

class Doc {
 public:
  explicit Doc(const std::string& title) {
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
             num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
             "\" fill=\"white\"/>\n";
    if (!title.empty()) {
      text(kWidth / 2, 20, title, "middle", 14);
    }
  }
  void line(const std::string& raw) { body_ += raw + "\n"; }
  void text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 11) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
  }
  void axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    const double l = kMargin, r = kWidth - kMargin, t = kMargin, b = kHeight - kMargin;
    line("<rect x=\"" + num(l) + "\" y=\"" + num(t) + "\" width=\"" + num(r - l) + "\" height=\"" +
         num(b - t) + "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>");
    for (int i = 0; i <= 4; ++i) {
      const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
      const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
      text(f.px(xv), b + 14, label_num(xv));
      text(l - 4, f.py(yv) + 4, label_num(yv), "end");
    }
    if (!xlabel.empty()) text(kWidth / 2, kHeight - 6, xlabel);
    if (!ylabel.empty()) text(12, kHeight / 2, ylabel, "middle");
  }
  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kMargin + 14 + 14 * static_cast<double>(i);
      line("<rect x=\"" + num(kWidth - kMargin - 110) + "\" y=\"" + num(y - 8) +
           "\" width=\"8\" height=\"8\" fill=\"" + kPalette[i % 8] + "\"/>");
      text(kWidth - kMargin - 98, y, names[i], "start", 10);
    }
  }
  std::string finish() { return body_ + "</svg>\n"; }

 private:
  std::string body_;
};

ad::Tensor grid_points(const Extent& e, std::size_t n) {
  std::vector<double> v;
  v.reserve(2 * n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double fx = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
      const double fy = n == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(n - 1);
      v.push_back(e.lo[0] + fx * (e.hi[0] - e.lo[0]));
      v.push_back(e.lo[1] + fy * (e.hi[1] - e.lo[1]));
    }
  }
  return ad::Tensor({n * n, 2}, std::move(v));
}

Frame frame_of(const Extent& e) { return {e.lo[0], e.hi[0], e.lo[1], e.hi[1]}; }

}  // namespace

void Extent::validate() const {
  if (!(lo[0] < hi[0] && lo[1] < hi[1])) throw ValidationError("plot extent needs lo < hi");
}

std::string vector_field(const GradientField& field, const Extent& extent, std::size_t grid,
                         double t, const std::string& title) {
  extent.validate();
  if (grid < 2) throw ValidationError("vector field grid must be >= 2");
  if (field.dim() != 2) throw ValidationError("vector field plot needs a 2-D field");
  const ad::Tensor pts = grid_points(extent, grid);
  const ad::Tensor g = field.gradient(pts, t);
  const std::size_t n = grid * grid;
  double gmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, std::hypot(g[2 * i], g[2 * i + 1]));
  const Frame f = frame_of(extent);
  const double cell = (kWidth - 2 * kMargin) / static_cast<double>(grid);
  Doc doc(title);
  doc.axes(f, "x0", "x1");
  for (std::size_t i = 0; i < n; ++i) {
    const double x = f.px(pts[2 * i]), y = f.py(pts[2 * i + 1]);
    // Descent direction -g, screen y flipped.
    double dx = -g[2 * i], dy = g[2 * i + 1];
    const double norm = std::hypot(dx, dy);
    const double len = gmax > 0 ? 0.9 * cell * norm / gmax : 0.0;
    if (norm > 0) {
      dx *= len / norm;
      dy *= len / norm;
    }
    const double ex = x + dx, ey = y + dy;
    // Head: two short strokes back from the tip at +-25 degrees.
    const double h = 0.35 * len, c = std::cos(0.436), s = std::sin(0.436);
    const double ux = norm > 0 ? -dx / len : 0, uy = norm > 0 ? -dy / len : 0;
    const double ax = ex + h * (c * ux - s * uy), ay = ey + h * (s * ux + c * uy);
    const double bx = ex + h * (c * ux + s * uy), by = ey + h * (-s * ux + c * uy);
    doc.line("<path class=\"arrow\" d=\"M" + num(x) + " " + num(y) + "L" + num(ex) + " " + num(ey) +
             "M" + num(ax) + " " + num(ay) + "L" + num(ex) + " " + num(ey) + "L" + num(bx) + " " +
             num(by) + "\" stroke=\"#1f77b4\" stroke-width=\"0.8\" fill=\"none\"/>");
  }
  return doc.finish();
}

std::string scatter(const std::vector<Series>& series, const Extent& extent, const std::string& title) {
  extent.validate();
  if (series.empty()) throw ValidationError("scatter needs at least one series");
  const Frame f = frame_of(extent);
  Doc doc(title);
  doc.axes(f, "x0", "x1");
  std::vector<std::string> names;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& p = series[s].points;
    if (p.rank() != 2 || p.dim(1) != 2) throw ValidationError("scatter series must be [n, 2]");
    names.push_back(series[s].name);
    for (std::size_t i = 0; i < p.dim(0); ++i) {
      const double x = p[2 * i], y = p[2 * i + 1];
      if (!(x >= f.x0 && x <= f.x1 && y >= f.y0 && y <= f.y1)) continue;
      doc.line("<circle class=\"point\" cx=\"" + num(f.px(x)) + "\" cy=\"" + num(f.py(y)) +
               "\" r=\"1.5\" fill=\"" + kPalette[s % 8] + "\" fill-opacity=\"0.6\"/>");
    }
  }
  doc.legend(names);
  return doc.finish();
}

std::string energy_contours(const GradientFieldModel& model, const Extent& extent,
                            std::size_t resolution, std::size_t levels, std::optional<int> label,
                            const std::string& title) {
  if (model.config().energy == EnergyKind::kNone) {
    throw ValidationError("energy contour plot needs a model with energy kind dot or l2norm");
  }
  extent.validate();
  if (resolution < 2 || levels < 1) throw ValidationError("contour plot needs resolution >= 2, levels >= 1");
  const std::size_t n = resolution;
  const ad::Tensor pts = grid_points(extent, n);
  Conditioning cond;
  if (model.config().num_classes > 0) {
    if (!label) throw ValidationError("class-conditional model needs a label for the contour plot");
    cond = Conditioning::label(*label, n * n);
  }
  const ad::Tensor e = model.energy(pts, cond);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < n * n; ++i) {
    if (!std::isfinite(e[i])) throw NumericalError("non-finite energy on the contour grid");
    lo = std::min(lo, e[i]);
    hi = std::max(hi, e[i]);
  }
  const Frame f = frame_of(extent);
  Doc doc(title);
  doc.axes(f, "x0", "x1");
  auto at = [&](std::size_t i, std::size_t j) { return e[j * n + i]; };
  auto gx = [&](double i) { return f.px(extent.lo[0] + i / (n - 1.0) * (extent.hi[0] - extent.lo[0])); };
  auto gy = [&](double j) { return f.py(extent.lo[1] + j / (n - 1.0) * (extent.hi[1] - extent.lo[1])); };
  for (std::size_t l = 0; l < levels; ++l) {
    const double level = lo + (hi - lo) * (static_cast<double>(l) + 0.5) / static_cast<double>(levels);
    std::string d;
    // Marching squares; saddle cells are split the same way every time.
    for (std::size_t j = 0; j + 1 < n; ++j) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
        const double ci[4] = {0, 1, 1, 0}, cj[4] = {0, 0, 1, 1};
        std::vector<std::pair<double, double>> hits;
        for (int k = 0; k < 4; ++k) {
          const double a = v[k], b = v[(k + 1) % 4];
          if ((a < level) != (b < level)) {
            const double s = (level - a) / (b - a);
            const int k2 = (k + 1) % 4;
            hits.emplace_back(i + ci[k] + s * (ci[k2] - ci[k]), j + cj[k] + s * (cj[k2] - cj[k]));
          }
        }
        for (std::size_t h = 0; h + 1 < hits.size(); h += 2) {
          d += "M" + num(gx(hits[h].first)) + " " + num(gy(hits[h].second)) + "L" +
               num(gx(hits[h + 1].first)) + " " + num(gy(hits[h + 1].second));
        }
      }
    }
    if (d.empty()) continue;
    const double shade = static_cast<double>(l) / std::max<std::size_t>(1, levels - 1);
    char color[8];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", static_cast<int>(30 + 200 * shade),
                  static_cast<int>(60 + 80 * shade), static_cast<int>(200 - 170 * shade));
    doc.line("<path class=\"contour\" data-level=\"" + label_num(level) + "\" d=\"" + d +
             "\" stroke=\"" + color + "\" stroke-width=\"1\" fill=\"none\"/>");
  }
  return doc.finish();
}

std::string histogram(const std::vector<std::size_t>& values, std::size_t bins,
                      const std::string& title, const std::string& xlabel) {
  if (values.empty()) throw ValidationError("histogram needs at least one value");
  if (bins == 0) throw ValidationError("histogram needs bins >= 1");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = static_cast<double>(*mn), hi = static_cast<double>(*mx) + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (auto v : values) {
    auto b = static_cast<std::size_t>((static_cast<double>(v) - lo) / width);
    counts[std::min(b, bins - 1)]++;
  }
  const double top = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  const Frame f{lo, hi, 0.0, top * 1.05};
  Doc doc(title);
  doc.axes(f, xlabel, "count");
  for (std::size_t b = 0; b < bins; ++b) {
    const double x0 = f.px(lo + width * b), x1 = f.px(lo + width * (b + 1));
    const double y = f.py(static_cast<double>(counts[b]));
    doc.line("<rect class=\"bar\" x=\"" + num(x0) + "\" y=\"" + num(y) + "\" width=\"" +
             num(x1 - x0) + "\" height=\"" + num(f.py(0) - y) +
             "\" fill=\"#1f77b4\" stroke=\"white\" stroke-width=\"0.5\"/>");
  }
  return doc.finish();
}

std::string curves(const std::vector<double>& x, const std::vector<Curve>& ys, const std::string& title,
                   const std::string& xlabel, const std::string& ylabel) {
  if (x.empty() || ys.empty()) throw ValidationError("curves needs x values and at least one curve");
  double x0 = *std::min_element(x.begin(), x.end()), x1 = *std::max_element(x.begin(), x.end());
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& c : ys) {
    if (c.y.size() != x.size()) throw ValidationError("curve '" + c.name + "' length differs from x");
    for (double v : c.y) {
      if (!std::isfinite(v)) continue;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  const Frame f{x0, x1, y0 - pad, y1 + pad};
  Doc doc(title);
  doc.axes(f, xlabel, ylabel);
  std::vector<std::string> names;
  for (std::size_t s = 0; s < ys.size(); ++s) {
    names.push_back(ys[s].name);
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(ys[s].y[i])) {
        pen = false;
        continue;
      }
      d += (pen ? "L" : "M") + num(f.px(x[i])) + " " + num(f.py(ys[s].y[i]));
      pen = true;
      doc.line("<circle cx=\"" + num(f.px(x[i])) + "\" cy=\"" + num(f.py(ys[s].y[i])) + "\" r=\"2.5\" fill=\"" +
               kPalette[s % 8] + "\"/>");
    }
    doc.line("<path class=\"curve\" d=\"" + d + "\" stroke=\"" + kPalette[s % 8] +
             "\" stroke-width=\"1.5\" fill=\"none\"/>");
  }
  doc.legend(names);
  return doc.finish();
}

}  // namespace eqm::plot
