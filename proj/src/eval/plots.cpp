#include "morphctl/eval/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace morphctl {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
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

struct Canvas {
  std::ostringstream s;
  Canvas(double w, double h, const std::string& title) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(w / 2, 18, title, "middle", 14);
  }
  void text(double x, double y, const std::string& t, const char* anchor = "start", int size = 11,
            const char* extra = "") {
    s << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
      << "\" font-size=\"" << size << "\"" << extra << ">" << escape(t) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke = "black", double w = 1) {
    s << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
      << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(w) << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    s << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(w, 0.0))
      << "\" height=\"" << num(std::max(h, 0.0)) << "\" fill=\"" << fill << "\"/>\n";
  }
  std::string done() {
    s << "</svg>\n";
    return s.str();
  }
};

struct Range {
  double lo = 0.0, hi = 1.0;
  void fit(double v) {
    if (!std::isfinite(v)) return;
    if (empty) {
      lo = hi = v;
      empty = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void pad() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  bool empty = true;
};

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
  const double W = 640, H = 400, L = 70, R = 150, T = 30, B = 50;
  Range xr, yr;
  for (const Series& s : series) {
    for (double v : s.x) xr.fit(v);
    for (double v : s.y) yr.fit(v);
  }
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - T - B); };
  Canvas c(W, H, title);
  c.line(L, H - B, W - R, H - B);
  c.line(L, T, L, H - B);
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0, yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    c.text(px(xv), H - B + 15, tick(xv), "middle");
    c.text(L - 5, py(yv) + 4, tick(yv), "end");
    c.line(L, py(yv), W - R, py(yv), "#e0e0e0");
  }
  c.text((L + W - R) / 2, H - 12, x_label, "middle");
  c.text(16, (T + H - B) / 2, y_label, "middle", 11,
         (" transform=\"rotate(-90 16 " + num((T + H - B) / 2) + ")\"").c_str());
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % 8];
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) {
        pen = false;
        continue;
      }
      path += (pen ? " L" : " M") + num(px(s.x[i])) + " " + num(py(s.y[i]));
      pen = true;
    }
    if (!path.empty()) {
      c.s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
    }
    c.rect(W - R + 10, T + 16 * k, 10, 10, color);
    c.text(W - R + 25, T + 16 * k + 9, s.name);
  }
  return c.done();
}

std::string svg_histogram_panels(const std::string& title,
                                 const std::vector<std::string>& panel_titles,
                                 const std::vector<std::vector<std::size_t>>& histograms,
                                 double lo, double hi) {
  if (panel_titles.size() != histograms.size()) {
    throw std::invalid_argument("svg_histogram_panels: one title per histogram");
  }
  const double PW = 220, PH = 160, gap = 20, top = 30;
  const std::size_t cols = std::min<std::size_t>(std::max<std::size_t>(histograms.size(), 1), 4);
  const std::size_t rows = (histograms.size() + cols - 1) / cols;
  Canvas c(cols * (PW + gap) + gap, top + std::max<std::size_t>(rows, 1) * (PH + gap + 20), title);
  for (std::size_t p = 0; p < histograms.size(); ++p) {
    const double x0 = gap + (p % cols) * (PW + gap), y0 = top + (p / cols) * (PH + gap + 20);
    const auto& h = histograms[p];
    std::size_t total = 0, peak = 1;
    for (std::size_t v : h) {
      total += v;
      peak = std::max(peak, v);
    }
    c.text(x0 + PW / 2, y0 + 12, panel_titles[p], "middle");
    const double base = y0 + PH, height = PH - 20, bw = PW / std::max<std::size_t>(h.size(), 1);
    for (std::size_t b = 0; b < h.size(); ++b) {
      const double bh = height * static_cast<double>(h[b]) / static_cast<double>(peak);
      c.rect(x0 + b * bw, base - bh, bw * 0.9, bh, "#1f77b4");
    }
    c.line(x0, base, x0 + PW, base);
    c.text(x0, base + 13, tick(lo), "start");
    c.text(x0 + PW, base + 13, tick(hi), "end");
    c.text(x0 + PW / 2, base + 13, "n=" + std::to_string(total), "middle");
  }
  return c.done();
}

std::string svg_heatmap(const std::string& title, const CorrelationMatrix& m) {
  const double cell = 28, L = 70, T = 40;
  const double W = L + cell * m.dim + 90, H = T + cell * m.dim + 40;
  Canvas c(W, H, title);
  auto color = [](double r) {
    if (std::isnan(r)) return std::string("#bbbbbb");
    const double t = std::clamp(r, -1.0, 1.0);
    // white at 0, red for positive, blue for negative
    const int hi = 255, lo = static_cast<int>(255 * (1.0 - std::abs(t)));
    char buf[16];
    if (t >= 0) {
      std::snprintf(buf, sizeof buf, "#%02x%02x%02x", hi, lo, lo);
    } else {
      std::snprintf(buf, sizeof buf, "#%02x%02x%02x", lo, lo, hi);
    }
    return std::string(buf);
  };
  for (std::size_t i = 0; i < m.dim; ++i) {
    c.text(L - 5, T + cell * i + cell / 2 + 4, m.labels[i], "end");
    c.text(L + cell * i + cell / 2, T - 5, m.labels[i], "middle", 9);
    for (std::size_t j = 0; j < m.dim; ++j) {
      c.rect(L + cell * j, T + cell * i, cell - 1, cell - 1, color(m.at(i, j)));
    }
  }
  const double lx = L + cell * m.dim + 20;
  for (int k = 0; k <= 20; ++k) {
    const double r = 1.0 - k / 10.0;
    c.rect(lx, T + k * 6, 14, 6, color(r));
  }
  c.text(lx + 18, T + 8, "+1");
  c.text(lx + 18, T + 126, "-1");
  c.text(L, H - 12, "mean |offdiag| = " + tick(m.mean_abs_offdiag));
  return c.done();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& means, const std::vector<double>& stds) {
  const double W = std::max(360.0, 90.0 * labels.size() + 100), H = 360, L = 70, B = 60, T = 30;
  Range yr;
  yr.fit(0.0);
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double s = i < stds.size() ? stds[i] : 0.0;
    yr.fit(means[i] + s);
    yr.fit(means[i] - s);
  }
  yr.pad();
  auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - T - B); };
  Canvas c(W, H, title);
  c.line(L, py(0), W - 20, py(0));
  c.line(L, T, L, H - B);
  for (int i = 0; i <= 4; ++i) {
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    c.text(L - 5, py(yv) + 4, tick(yv), "end");
  }
  const double slot = (W - L - 20) / std::max<std::size_t>(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size() && i < means.size(); ++i) {
    const double x = L + slot * i + slot * 0.2, w = slot * 0.6;
    const double top = py(std::max(means[i], 0.0)), bottom = py(std::min(means[i], 0.0));
    c.rect(x, top, w, bottom - top, kPalette[i % 8]);
    if (i < stds.size() && stds[i] > 0) {
      c.line(x + w / 2, py(means[i] - stds[i]), x + w / 2, py(means[i] + stds[i]));
    }
    c.text(x + w / 2, H - B + 15, labels[i], "middle");
    c.text(x + w / 2, H - B + 30, tick(means[i]), "middle", 9);
  }
  return c.done();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace morphctl
