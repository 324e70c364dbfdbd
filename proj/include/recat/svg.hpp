#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "recat/detail/format.hpp"
#include "recat/evaluate.hpp"

// Self-contained SVG charts for the report stage. Coordinates are printed
// with fixed precision so output is byte-stable.
namespace recat::svg {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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
      default: out.push_back(c);
    }
  }
  return out;
}

inline void open(std::ostringstream& os, double w, double h, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h) << "\" viewBox=\"0 0 "
     << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(w / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
}

}  // namespace detail

struct Bar {
  std::string label;
  double value = 0;  // percent
};

inline std::string bar_chart(const std::vector<Bar>& bars, const std::string& title) {
  const double left = 60, top = 30, bar_h = 18, gap = 4, width = 420;
  const double h = top + static_cast<double>(bars.size()) * (bar_h + gap) + 20;
  double max = 1e-9;
  for (const auto& b : bars) max = std::max(max, b.value);
  std::ostringstream os;
  detail::open(os, left + width + 80, h, title);
  double y = top;
  for (const auto& b : bars) {
    double len = width * b.value / max;
    os << "<text x=\"" << detail::num(left - 6) << "\" y=\"" << detail::num(y + bar_h * 0.7)
       << "\" text-anchor=\"end\">" << detail::escape(b.label) << "</text>\n"
       << "<rect x=\"" << detail::num(left) << "\" y=\"" << detail::num(y) << "\" width=\"" << detail::num(len)
       << "\" height=\"" << detail::num(bar_h) << "\" fill=\"#2b6cb0\"/>\n"
       << "<text x=\"" << detail::num(left + len + 4) << "\" y=\"" << detail::num(y + bar_h * 0.7) << "\">"
       << recat::detail::fixed_1dp(b.value) << "%</text>\n";
    y += bar_h + gap;
  }
  os << "</svg>\n";
  return os.str();
}

struct Series {
  std::string name;
  std::string colour;
  std::vector<double> values;  // percent, one per x label
};

inline std::string line_chart(const std::vector<std::string>& x_labels, const std::vector<Series>& series,
                              const std::string& title) {
  const double left = 50, top = 30, plot_w = 480, plot_h = 240;
  std::ostringstream os;
  detail::open(os, left + plot_w + 120, top + plot_h + 50, title);
  os << "<line x1=\"" << detail::num(left) << "\" y1=\"" << detail::num(top + plot_h) << "\" x2=\""
     << detail::num(left + plot_w) << "\" y2=\"" << detail::num(top + plot_h) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << detail::num(left) << "\" y1=\"" << detail::num(top) << "\" x2=\"" << detail::num(left)
     << "\" y2=\"" << detail::num(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (int p = 0; p <= 100; p += 25) {
    double y = top + plot_h * (1.0 - p / 100.0);
    os << "<text x=\"" << detail::num(left - 6) << "\" y=\"" << detail::num(y + 4) << "\" text-anchor=\"end\">" << p
       << "%</text>\n";
  }
  const double step = x_labels.size() > 1 ? plot_w / static_cast<double>(x_labels.size() - 1) : 0.0;
  for (std::size_t i = 0; i < x_labels.size(); ++i) {
    os << "<text x=\"" << detail::num(left + step * static_cast<double>(i)) << "\" y=\"" << detail::num(top + plot_h + 16)
       << "\" text-anchor=\"middle\">" << detail::escape(x_labels[i]) << "</text>\n";
  }
  double legend_y = top + 10;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) os << ' ';
      os << detail::num(left + step * static_cast<double>(i)) << ',' << detail::num(top + plot_h * (1.0 - s.values[i] / 100.0));
    }
    os << "\"/>\n<text x=\"" << detail::num(left + plot_w + 10) << "\" y=\"" << detail::num(legend_y) << "\" fill=\""
       << s.colour << "\">" << detail::escape(s.name) << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  return os.str();
}

/// Heat-map grid; cell opacity scales with the percentage.
inline std::string heatmap(const TransitionMatrix& m, const std::string& title) {
  const double left = 50, top = 50, cell = 34;
  std::ostringstream os;
  detail::open(os, left + cell * static_cast<double>(m.cols.size()) + 20, top + cell * static_cast<double>(m.rows.size()) + 20,
               title);
  for (std::size_t j = 0; j < m.cols.size(); ++j) {
    os << "<text x=\"" << detail::num(left + cell * (static_cast<double>(j) + 0.5)) << "\" y=\"" << detail::num(top - 6)
       << "\" text-anchor=\"middle\">" << m.cols[j].digits() << "</text>\n";
  }
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    double y = top + cell * static_cast<double>(i);
    os << "<text x=\"" << detail::num(left - 6) << "\" y=\"" << detail::num(y + cell * 0.6) << "\" text-anchor=\"end\">"
       << m.rows[i].digits() << "</text>\n";
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
      double v = m.cells[i][j];
      double x = left + cell * static_cast<double>(j);
      os << "<rect x=\"" << detail::num(x) << "\" y=\"" << detail::num(y) << "\" width=\"" << detail::num(cell)
         << "\" height=\"" << detail::num(cell) << "\" fill=\"#2f855a\" fill-opacity=\"" << detail::num(v / 100.0)
         << "\" stroke=\"#cccccc\"/>\n";
      if (v >= 0.05) {
        os << "<text x=\"" << detail::num(x + cell / 2) << "\" y=\"" << detail::num(y + cell * 0.6)
           << "\" text-anchor=\"middle\" font-size=\"9\">" << recat::detail::fixed_1dp(v) << "</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace recat::svg
