#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "minimalist/inference.hpp"

namespace minimalist {

// Minimal SVG emitters so benchmark figures need no external stack.

namespace detail {
inline const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

inline std::string svg_header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// piecewise-linear viridis-like ramp
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  double pos = t * 4.0;
  int i = std::min(3, static_cast<int>(pos));
  double f = pos - i;
  int r = static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]));
  int g = static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]));
  int b = static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}
}  // namespace detail

// Line chart of one or more named series over shared x values.
inline void svg_line_chart(const std::string& path, const std::vector<double>& x,
                           const std::map<std::string, std::vector<double>>& series,
                           const std::string& title, bool log_y = false) {
  const int W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = *std::min_element(x.begin(), x.end());
  double xmax = *std::max_element(x.begin(), x.end());
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      double y = log_y ? std::log10(std::max(v, 1e-12)) : v;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto sy = [&](double v) {
    double y = log_y ? std::log10(std::max(v, 1e-12)) : v;
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  std::ofstream out(path);
  out << detail::svg_header(W, H);
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  int idx = 0;
  int legend_y = mt;
  for (const auto& [name, ys] : series) {
    const char* color = detail::kSeriesColors[idx % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < ys.size(); ++i)
      out << sx(x[i]) << "," << sy(ys[i]) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << W - mr - 100 << "\" y=\"" << legend_y << "\" font-size=\"12\" fill=\""
        << color << "\">" << name << "</text>\n";
    legend_y += 16;
    ++idx;
  }
  out << "</svg>\n";
}

// Heatmap of a 2-d posterior grid (axis 0 horizontal).
inline void svg_heatmap(const std::string& path, const PosteriorGrid& grid,
                        const std::string& title) {
  if (grid.axes.size() != 2) throw std::invalid_argument("svg_heatmap: need a 2-d grid");
  const int n0 = static_cast<int>(grid.axes[0].size());
  const int n1 = static_cast<int>(grid.axes[1].size());
  const int W = 640, H = 560, ml = 60, mr = 20, mt = 40, mb = 40;
  double cell_w = static_cast<double>(W - ml - mr) / n0;
  double cell_h = static_cast<double>(H - mt - mb) / n1;
  double dmax = grid.density.maxCoeff();
  std::ofstream out(path);
  out << detail::svg_header(W, H);
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      double d = grid.density(static_cast<Eigen::Index>(i) * n1 + j);
      out << "<rect x=\"" << ml + i * cell_w << "\" y=\"" << H - mb - (j + 1) * cell_h
          << "\" width=\"" << cell_w + 0.5 << "\" height=\"" << cell_h + 0.5 << "\" fill=\""
          << detail::heat_color(dmax > 0 ? d / dmax : 0.0) << "\"/>\n";
    }
  out << "</svg>\n";
}

// 1-d density plot of one or more grids sharing an axis.
inline void svg_density_lines(const std::string& path,
                              const std::map<std::string, const PosteriorGrid*>& grids,
                              const std::string& title) {
  std::vector<double> x;
  std::map<std::string, std::vector<double>> series;
  for (const auto& [name, g] : grids) {
    if (g->axes.size() != 1) throw std::invalid_argument("svg_density_lines: need 1-d grids");
    if (x.empty())
      for (Eigen::Index i = 0; i < g->axes[0].size(); ++i) x.push_back(g->axes[0](i));
    std::vector<double> ys(static_cast<std::size_t>(g->density.size()));
    for (Eigen::Index i = 0; i < g->density.size(); ++i) ys[static_cast<std::size_t>(i)] = g->density(i);
    series[name] = std::move(ys);
  }
  svg_line_chart(path, x, series, title);
}

}  // namespace minimalist
