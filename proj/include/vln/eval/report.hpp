#pragma once

#include <string>
#include <vector>

#include "vln/core/common.hpp"

namespace vln::eval {

// Renders loss curves, metric tables, sweep plots and instruction-weight
// heatmaps from a run directory into plots/ + report.txt. Missing inputs
// produce a partial report that names the gaps; a run directory with no
// usable artifacts at all is an error.
void write_report(const std::string& run_dir);

// Minimal SVG emitters (self-contained, no external plotting dependency).
void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<real>& xs,
                    const std::vector<std::pair<std::string, std::vector<real>>>& series);

void svg_heatmap(const std::string& path, const std::string& title, int rows,
                 int cols, const std::vector<real>& values);

}  // namespace vln::eval
