#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lever/experiments.hpp"

namespace lever {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
constexpr int kWidth = 720, kHeight = 480;
constexpr double kLeft = 74, kRight = 168, kTop = 46, kBottom = 58;

struct Series {
  std::string label;
  std::vector<std::array<double, 2>> pts;
};

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

std::string compact(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%g", v);
  return b;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

// Tick step of the form {1,2,5}*10^k giving roughly five intervals.
double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

std::string render_chart(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series,
                         bool log_x, bool scatter) {
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " +
         std::to_string(kWidth) + " " + std::to_string(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + num(kWidth / 2.0) +
         "\" y=\"26\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\" "
         "fill=\"#222\">" +
         escape(title) + "</text>\n";

  bool any = false;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  for (const Series& s : series)
    for (const auto& p : s.pts) {
      double x = log_x ? std::log10(p[0]) : p[0];
      if (!std::isfinite(x) || !std::isfinite(p[1])) continue;
      if (!any) {
        x_lo = x_hi = x;
        y_lo = y_hi = p[1];
        any = true;
      } else {
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, p[1]);
        y_hi = std::max(y_hi, p[1]);
      }
    }
  if (!any) {
    svg += "<text x=\"" + num(kWidth / 2.0) + "\" y=\"" + num(kHeight / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
           "fill=\"#888\">no data</text>\n</svg>\n";
    return svg;
  }
  y_lo = std::min(0.0, y_lo);
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  y_hi += 0.06 * (y_hi - y_lo);
  if (x_hi <= x_lo) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h; };

  // Gridlines and ticks.
  std::vector<std::pair<double, std::string>> x_ticks;
  if (log_x) {
    for (int k = static_cast<int>(std::ceil(x_lo - 1e-9));
         k <= static_cast<int>(std::floor(x_hi + 1e-9)); ++k)
      x_ticks.emplace_back(k, compact(std::pow(10.0, k)));
  } else {
    const double step = nice_step(x_hi - x_lo);
    for (double v = std::ceil(x_lo / step) * step; v <= x_hi + 1e-12 * step; v += step)
      x_ticks.emplace_back(v, compact(std::abs(v) < step * 1e-9 ? 0.0 : v));
  }
  const double y_step = nice_step(y_hi - y_lo);
  std::vector<std::pair<double, std::string>> y_ticks;
  for (double v = std::ceil(y_lo / y_step) * y_step; v <= y_hi + 1e-12 * y_step; v += y_step)
    y_ticks.emplace_back(v, compact(std::abs(v) < y_step * 1e-9 ? 0.0 : v));

  for (const auto& [v, label] : x_ticks) {
    svg += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(px(v)) +
           "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"#e3e3e3\"/>\n";
    svg += "<text x=\"" + num(px(v)) + "\" y=\"" + num(kTop + plot_h + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#444\">" +
           label + "</text>\n";
  }
  for (const auto& [v, label] : y_ticks) {
    svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(v)) + "\" x2=\"" +
           num(kLeft + plot_w) + "\" y2=\"" + num(py(v)) + "\" stroke=\"#e3e3e3\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#444\">" +
           label + "</text>\n";
  }
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(plot_w) +
         "\" height=\"" + num(plot_h) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  svg += "<text x=\"" + num(kLeft + plot_w / 2.0) + "\" y=\"" + num(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "fill=\"#222\">" +
         escape(x_label) + "</text>\n";
  svg += "<text transform=\"translate(20," + num(kTop + plot_h / 2.0) +
         ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" fill=\"#222\">" +
         escape(y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof kPalette / sizeof *kPalette)];
    std::string poly;
    for (const auto& p : series[i].pts) {
      double x = log_x ? std::log10(p[0]) : p[0];
      if (!std::isfinite(x) || !std::isfinite(p[1])) continue;
      poly += num(px(x)) + "," + num(py(p[1])) + " ";
    }
    if (!scatter && !poly.empty())
      svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.8\"/>\n";
    if (scatter && !poly.empty())
      svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"0.8\" stroke-dasharray=\"3 3\"/>\n";
    for (const auto& p : series[i].pts) {
      double x = log_x ? std::log10(p[0]) : p[0];
      if (!std::isfinite(x) || !std::isfinite(p[1])) continue;
      svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(p[1])) +
             "\" r=\"3.4\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(kWidth - kRight + 14) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kWidth - kRight + 38) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2.5\"/>\n";
    svg += "<text x=\"" + num(kWidth - kRight + 44) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" +
           escape(series[i].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

void emit_plots(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  const auto points = summarize(record);

  std::vector<Series> tv, score, trade;
  std::vector<std::string> order;
  for (const CurvePoint& p : points) {
    if (p.count == 0) continue;
    std::size_t idx = order.size();
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] == p.estimator) idx = i;
    if (idx == order.size()) {
      order.push_back(p.estimator);
      tv.push_back({p.estimator, {}});
      score.push_back({p.estimator, {}});
      trade.push_back({p.estimator, {}});
    }
    const double n = static_cast<double>(p.n_train);
    tv[idx].pts.push_back({n, p.mean_tv});
    score[idx].pts.push_back({n, p.mean_score});
    trade[idx].pts.push_back({p.mean_tv, p.mean_score});
  }

  const std::string& world = record.config.world.name;
  write_file(dir / "tv_vs_n.svg",
             render_chart("expected TV vs training samples, " + world, "training samples",
                          "expected TV distance", tv, true, false));
  write_file(dir / "score_vs_n.svg",
             render_chart("structure score vs training samples, " + world,
                          "training samples", "structure score", score, true, false));
  write_file(dir / "tradeoff.svg",
             render_chart("error against structure agreement, " + world,
                          "expected TV distance", "structure score", trade, false, true));
}

}  // namespace lever
