#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "morphctl/eval/diagnostics.hpp"

namespace morphctl {

// Static SVG renderings of the reports.

struct Series {
  std::string name;
  std::vector<double> x, y;  // NaN y values leave a gap
};

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

// One small bar panel per histogram, all sharing the [lo, hi] axis.
std::string svg_histogram_panels(const std::string& title,
                                 const std::vector<std::string>& panel_titles,
                                 const std::vector<std::vector<std::size_t>>& histograms,
                                 double lo, double hi);

// Diverging map over [-1, 1]; undefined entries are grey.
std::string svg_heatmap(const std::string& title, const CorrelationMatrix& m);

// Bars with +-1 std whiskers.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& means, const std::vector<double>& stds);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace morphctl
