#pragma once

// Line charts with a shaded spread band, written as standalone SVG plus the
// plotted numbers as CSV.

#include <filesystem>
#include <string>
#include <vector>

#include "pic/harness.hpp"

namespace pic {

struct PlotOptions {
  std::vector<std::string> metrics{"mean_return", "oscillation_ratio"};
  /// Band half-width in standard deviations across seeds.
  double band_factor = 0.5;
  /// Defaults to the first log directory.
  std::filesystem::path out_dir;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x, mean, lower, upper;
};

/// Column index of a metric among the CSV value columns; throws for unknown names.
std::size_t metric_column(const std::string& metric);

/// Series for one metric from a run directory's seed_*.csv files.
PlotSeries load_series(const std::filesystem::path& log_dir, const std::string& metric, double band_factor);

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label);

/// One <metric>.svg and <metric>.csv per requested metric, with one line per
/// log directory. Returns the written SVG paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& log_dirs,
                                              const PlotOptions& options = {});

/// seed_*.csv files in a run directory, sorted by name; throws if there are none.
std::vector<std::filesystem::path> seed_csvs(const std::filesystem::path& log_dir);

}  // namespace pic
