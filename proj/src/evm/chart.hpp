#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evm/dataset.hpp"
#include "evm/predict.hpp"

namespace evm {

enum class ChartKind { bar, strip, scatter, heatmap };

std::string_view to_string(ChartKind kind);

// Bar for one discrete variable, strip for one continuous variable or a
// continuous/discrete pair, scatter for two continuous, heatmap for two discrete.
ChartKind default_chart(std::optional<ColumnKind> x, std::optional<ColumnKind> y);

struct ChartSpec {
  std::optional<std::string> x;
  std::optional<std::string> y;
  std::optional<std::string> row;
  std::optional<std::string> column;
  bool show_residuals = false;
};

struct FacetCell {
  std::optional<std::string> row_level;
  std::optional<std::string> column_level;
  std::vector<std::size_t> rows;
};

// Cells in row-major order over row levels x column levels. Rows whose facet
// value is missing fall into a trailing "NA" level.
struct FacetGrid {
  std::optional<std::string> row;
  std::optional<std::string> column;
  std::vector<std::string> row_levels;
  std::vector<std::string> column_levels;
  std::vector<FacetCell> cells;

  std::size_t n_rows() const { return std::max<std::size_t>(row_levels.size(), 1); }
  std::size_t n_columns() const { return std::max<std::size_t>(column_levels.size(), 1); }
};

FacetGrid facet_grid(const ChartSpec& spec, const Dataset& d);

struct AxisScale {
  std::string field;
  bool quantitative = true;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> levels;
  bool outcome = false;  // computed over observed and predicted values jointly

  friend bool operator==(const AxisScale&, const AxisScale&) = default;
};

// Observed residuals y - E[y | x, beta_hat] of one model, aligned with the
// table's observed rows.
struct ResidualSeries {
  std::string model;
  std::vector<double> values;
};

struct Panel {
  std::string source;
  ChartKind kind = ChartKind::scatter;
  std::size_t records = 0;
  std::size_t frames = 0;  // animation frames (draws); 0 for the observed panel
  bool converged = true;
  // Residual view only: every model's series on the observed panel, the
  // panel's own model on a model panel.
  std::vector<ResidualSeries> residuals;
};

struct CheckLayout {
  ChartSpec spec;
  ChartKind kind = ChartKind::scatter;
  bool residual_view = false;
  std::optional<AxisScale> x;
  std::optional<AxisScale> y;
  FacetGrid facets;
  std::vector<Panel> panels;  // observed first, then one per model in order
  std::optional<std::string> outcome;
  std::size_t n_obs = 0;
  std::size_t records = 0;
  std::size_t dropped = 0;
};

// Relative padding applied to both ends of quantitative domains.
inline constexpr double kScalePadding = 0.05;

CheckLayout compose_check(const ChartSpec& spec, const PredictiveTable& table);
// The same chart with no models attached.
CheckLayout plain_chart(const ChartSpec& spec, const Dataset& d);

nlohmann::json to_json(const CheckLayout& layout);
ChartSpec chart_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChartSpec& spec);

}  // namespace evm
