// SPDX-License-Identifier: Apache-2.0
//
// Static SVG charts for ablation and sweep summaries.

#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "epic/trainer.hpp"

namespace epic {

struct Bar {
  std::string label;
  double mean = 0.0;
  double std = 0.0;
  std::string series;  // legend group; empty for a single series
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
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

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colours[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  return colours[i % 6];
}

}  // namespace detail

/// Vertical bars with ±std whiskers on a [0, 1] axis.
inline std::string bar_chart_svg(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars) {
  const double W = 120.0 + 90.0 * static_cast<double>(std::max<std::size_t>(bars.size(), 1)), H = 360.0;
  const double left = 70.0, right = 20.0, top = 40.0, bottom = 90.0;
  const double plot_w = W - left - right, plot_h = H - top - bottom;
  std::vector<std::string> series;
  for (const auto& b : bars)
    if (std::find(series.begin(), series.end(), b.series) == series.end()) series.push_back(b.series);

  auto y = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt("%.0f", W) + "\" height=\"" +
                  detail::fmt("%.0f", H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + detail::fmt("%.1f", W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::svg_escape(title) + "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    s += "<line x1=\"" + detail::fmt("%.1f", left) + "\" x2=\"" + detail::fmt("%.1f", left + plot_w) + "\" y1=\"" +
         detail::fmt("%.1f", y(v)) + "\" y2=\"" + detail::fmt("%.1f", y(v)) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + detail::fmt("%.1f", left - 6) + "\" y=\"" + detail::fmt("%.1f", y(v) + 4) +
         "\" text-anchor=\"end\">" + detail::fmt("%.1f", v) + "</text>\n";
  }
  s += "<text transform=\"translate(18," + detail::fmt("%.1f", top + plot_h / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + detail::svg_escape(y_label) + "</text>\n";
  const double slot = plot_w / static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const std::size_t si = static_cast<std::size_t>(std::find(series.begin(), series.end(), b.series) - series.begin());
    const double x = left + slot * static_cast<double>(i) + slot * 0.15, w = slot * 0.7;
    s += "<rect x=\"" + detail::fmt("%.1f", x) + "\" y=\"" + detail::fmt("%.1f", y(b.mean)) + "\" width=\"" +
         detail::fmt("%.1f", w) + "\" height=\"" + detail::fmt("%.1f", y(0.0) - y(b.mean)) + "\" fill=\"" +
         detail::palette(si) + "\"/>\n";
    const double cx = x + w / 2;
    s += "<line x1=\"" + detail::fmt("%.1f", cx) + "\" x2=\"" + detail::fmt("%.1f", cx) + "\" y1=\"" +
         detail::fmt("%.1f", y(b.mean - b.std)) + "\" y2=\"" + detail::fmt("%.1f", y(b.mean + b.std)) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + detail::fmt("%.1f", cx) + "\" y=\"" + detail::fmt("%.1f", y(b.mean + b.std) - 4) +
         "\" text-anchor=\"middle\" font-size=\"10\">" + detail::fmt("%.3f", b.mean) + "</text>\n";
    s += "<text x=\"" + detail::fmt("%.1f", cx) + "\" y=\"" + detail::fmt("%.1f", top + plot_h + 16) +
         "\" text-anchor=\"middle\" font-size=\"10\">" + detail::svg_escape(b.label) + "</text>\n";
  }
  if (series.size() > 1) {
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double lx = left + 110.0 * static_cast<double>(i), ly = H - 30.0;
      s += "<rect x=\"" + detail::fmt("%.1f", lx) + "\" y=\"" + detail::fmt("%.1f", ly - 10) +
           "\" width=\"12\" height=\"12\" fill=\"" + detail::palette(i) + "\"/>\n";
      s += "<text x=\"" + detail::fmt("%.1f", lx + 16) + "\" y=\"" + detail::fmt("%.1f", ly) + "\">" +
           detail::svg_escape(series[i]) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

inline std::string ablation_svg(const AblationReport& rep) {
  std::vector<Bar> bars;
  for (const auto& r : rep.rows) bars.push_back({mode_name(r.mode), r.summary.mean, r.summary.std, ""});
  return bar_chart_svg("Ablation (" + std::to_string(rep.seeds.size()) + " seeds)", "test " + rep.metric, bars);
}

inline std::string sweep_svg(const SweepReport& rep) {
  std::vector<Bar> bars;
  for (const auto& c : rep.cells)
    bars.push_back({join_layers(c.layers, '-'), c.summary.mean, c.summary.std, family_name(c.family)});
  return bar_chart_svg("Interaction layers x similarity", "test " + rep.metric, bars);
}

}  // namespace epic
