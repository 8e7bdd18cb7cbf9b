#pragma once

// Minimal static SVG charts for the interpretation outputs.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace activity_airl::plots {

/// Rows drawn top to bottom, columns left to right, on a blue-white-red scale
/// centred at zero.
void heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values, const std::string& title,
             const std::string& x_label, const std::string& y_label);

struct Series {
  std::string name;
  std::vector<double> values;
};

/// One histogram panel per series, sharing the bin edges.
void histograms(const std::filesystem::path& path, const std::vector<Series>& series, int bins,
                const std::string& title);

/// Polyline through (x_i, y_i) with markers.
void line_chart(const std::filesystem::path& path, const std::vector<double>& x, const std::vector<double>& y,
                const std::string& title, const std::string& x_label, const std::string& y_label);

/// Grouped bars: one group per category, one bar per series.
void grouped_bars(const std::filesystem::path& path, const std::vector<std::string>& categories,
                  const std::vector<Series>& series, const std::string& title);

struct IndexEntry {
  std::string file;
  std::string description;
};

/// Plain-text list of the plot files with one description each.
void write_index(const std::filesystem::path& path, const std::vector<IndexEntry>& entries);

}  // namespace activity_airl::plots
