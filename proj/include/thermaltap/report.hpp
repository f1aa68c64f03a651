#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "thermaltap/eval.hpp"

namespace thermaltap::report {

std::string confusion_csv(const eval::ConfusionMatrix& cm);
std::string metrics_csv(const eval::ExperimentReport& report);

// Self-contained SVG strings (no display dependency).
std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title);
std::string line_chart_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& x_label, const std::string& title);
std::string grid_heatmap_svg(const std::vector<double>& cells, int n, const std::string& title);

// Renders one report.json into CSV tables and SVG plots under out_dir.
void render_report(const std::filesystem::path& report_json,
                   const std::filesystem::path& out_dir);

// Renders an ablation comparison (accuracy vs. swept parameter) from several
// reports; the sweep key is whichever of grid_n / window_s varies.
void render_sweep(const std::vector<std::filesystem::path>& report_jsons,
                  const std::filesystem::path& out_dir);

}  // namespace thermaltap::report
