#pragma once

#include <cstdio>
#include <span>
#include <string>

#include "msvl/metrics.hpp"

namespace msvl {

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

/// ROC curves of several reports on one set of axes, legend "name (AUROC x.xxx)".
inline std::string roc_svg(std::span<const EvalReport> reports) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  constexpr double size = 400.0, left = 60.0, top = 20.0;
  char buf[256];
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n"
      "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"black\"/>\n", left,
                top, size, size);
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n",
                left, top + size, left + size, top);
  svg += buf;
  for (int t = 0; t <= 5; ++t) {
    const double f = t / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.1f</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                  left + f * size, top + size + 16, f, left - 6, top + size - f * size + 4, f);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"%.0f\" font-size=\"13\" text-anchor=\"middle\">1 - Specificity</text>\n"
                "<text x=\"16\" y=\"%.0f\" font-size=\"13\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %.0f)\">Sensitivity</text>\n",
                left + size / 2, top + size + 40, top + size / 2, top + size / 2);
  svg += buf;

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const char* color = kColors[i % std::size(kColors)];
    svg += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"";
    svg += color;
    svg += "\" points=\"";
    for (std::size_t k = 0; k < r.roc.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", left + r.roc[k].fpr * size,
                    top + size - r.roc[k].tpr * size);
      svg += buf;
    }
    svg += "\"/>\n";
    const double ly = top + size - 20.0 * static_cast<double>(reports.size() - i);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  left + size - 190, ly, left + size - 170, ly, color);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" font-size=\"12\">", left + size - 165, ly + 4);
    svg += buf;
    svg += detail::xml_escape(r.model.empty() ? "model " + std::to_string(i + 1) : r.model);
    svg += " (AUROC " + format_fixed(r.auroc, 3) + ")</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace msvl
