#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fsgfa/tensor.hpp"

namespace fsgfa {

/// Minimal ROC plot: unit square, gridlines, one polyline per named curve.
inline void write_roc_svg(const std::string& path,
                          const std::vector<std::pair<std::string,
                                                      std::vector<std::pair<double, double>>>>&
                              curves,
                          const std::string& title = "ROC") {
  const int size = 480, margin = 50;
  const double span = size - 2.0 * margin;
  auto px = [&](double fpr) { return margin + fpr * span; };
  auto py = [&](double tpr) { return size - margin - tpr * span; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"};

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size
    << "' viewBox='0 0 " << size << ' ' << size << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << size / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
    << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    f << "<line x1='" << px(t) << "' y1='" << py(0) << "' x2='" << px(t) << "' y2='" << py(1)
      << "' stroke='#dddddd'/>\n";
    f << "<line x1='" << px(0) << "' y1='" << py(t) << "' x2='" << px(1) << "' y2='" << py(t)
      << "' stroke='#dddddd'/>\n";
    f << "<text x='" << px(t) << "' y='" << py(0) + 18 << "' text-anchor='middle' font-size='10'>"
      << t << "</text>\n";
    f << "<text x='" << px(0) - 8 << "' y='" << py(t) + 3 << "' text-anchor='end' font-size='10'>"
      << t << "</text>\n";
  }
  f << "<line x1='" << px(0) << "' y1='" << py(0) << "' x2='" << px(1) << "' y2='" << py(1)
    << "' stroke='#bbbbbb' stroke-dasharray='4 3'/>\n";
  f << "<text x='" << size / 2 << "' y='" << size - 8
    << "' text-anchor='middle' font-size='12'>false positive rate</text>\n";
  f << "<text x='14' y='" << size / 2
    << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 " << size / 2
    << ")'>true positive rate</text>\n";

  int ci = 0;
  for (const auto& [name, curve] : curves) {
    const char* color = palette[ci % 10];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto& [fpr, tpr] : curve) f << px(fpr) << ',' << py(tpr) << ' ';
    f << "'/>\n";
    f << "<text x='" << px(0.55) << "' y='" << py(0.05) - 14 * ci << "' font-size='11' fill='"
      << color << "'>" << name << "</text>\n";
    ++ci;
  }
  f << "</svg>\n";
}

}  // namespace fsgfa
