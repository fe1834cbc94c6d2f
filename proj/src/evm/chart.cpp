#include "evm/chart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "evm/error.hpp"

namespace evm {

namespace {

using nlohmann::json;

constexpr const char* kMissingLevel = "NA";

const Column& discrete_facet(const Dataset& d, const std::string& name) {
  const Column& col = d.column(name);
  if (col.kind() != ColumnKind::discrete)
    throw Error(ErrorCode::unsupported, "facet variable '" + name + "' must be discrete", {{"variable", name}});
  return col;
}

std::vector<std::string> facet_levels(const Column& col) {
  auto levels = col.levels();
  for (std::size_t r = 0; r < col.size(); ++r)
    if (col.missing(r)) {
      levels.push_back(kMissingLevel);
      break;
    }
  return levels;
}

AxisScale quantitative(const std::string& field, double lo, double hi) {
  AxisScale s;
  s.field = field;
  if (!(lo <= hi)) {
    lo = 0.0;
    hi = 0.0;
  }
  double pad = (hi - lo) * kScalePadding;
  if (pad == 0.0) pad = std::max(std::abs(lo) * kScalePadding, 0.5);
  s.min = lo - pad;
  s.max = hi + pad;
  return s;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

// Numeric level sets are ordered by value; text ones lexicographically.
std::vector<std::string> ordered_levels(const std::set<double>& numbers, const std::set<std::string>& text) {
  std::vector<std::string> out;
  for (double v : numbers) out.push_back(format_number(v));
  for (const auto& t : text) out.push_back(t);
  return out;
}

AxisScale column_scale(const Column& col) {
  if (col.kind() == ColumnKind::continuous) {
    Range r;
    for (double v : col.numbers()) r.add(v);
    return quantitative(col.name(), r.lo, r.hi);
  }
  AxisScale s;
  s.field = col.name();
  s.quantitative = false;
  s.levels = col.levels();
  return s;
}

AxisScale outcome_scale(const Column& col, const PredictiveTable& table) {
  if (col.kind() == ColumnKind::continuous) {
    Range r;
    for (double v : table.observed_outcome) r.add(v);
    for (const auto& b : table.blocks)
      for (double v : b.outcome) r.add(v);
    auto s = quantitative(col.name(), r.lo, r.hi);
    s.outcome = true;
    return s;
  }
  AxisScale s;
  s.field = col.name();
  s.quantitative = false;
  s.outcome = true;
  if (!table.outcome_levels.empty()) {
    s.levels = table.outcome_levels;
    return s;
  }
  std::set<double> numbers;
  for (std::size_t r = 0; r < col.size(); ++r)
    if (!col.missing(r)) numbers.insert(col.number(r));
  for (const auto& b : table.blocks)
    for (double v : b.outcome)
      if (std::isfinite(v)) numbers.insert(v);
  s.levels = ordered_levels(numbers, {});
  return s;
}

AxisScale residual_scale(const PredictiveTable& table) {
  Range r;
  for (const auto& m : table.models)
    for (std::size_t i = 0; i < m.fitted.size(); ++i) r.add(table.observed_outcome[i] - m.fitted[i]);
  for (const auto& b : table.blocks) {
    auto m = std::find_if(table.models.begin(), table.models.end(), [&](const ModelSummary& s) { return s.label == b.source; });
    for (std::size_t i = 0; i < b.outcome.size(); ++i) r.add(b.outcome[i] - m->fitted[i]);
  }
  auto s = quantitative("residual", std::min(r.lo, 0.0), std::max(r.hi, 0.0));
  s.outcome = true;
  return s;
}

json scale_json(const std::optional<AxisScale>& s) {
  if (!s) return nullptr;
  json j{{"field", s->field}, {"type", s->quantitative ? "quantitative" : "ordinal"}, {"outcome", s->outcome}};
  if (s->quantitative) j["domain"] = {s->min, s->max};
  else j["domain"] = s->levels;
  return j;
}

json field_json(const std::optional<AxisScale>& s) {
  if (!s) return nullptr;
  return {{"field", s->field}, {"type", s->quantitative ? "quantitative" : "ordinal"}};
}

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::string_view mark_for(ChartKind kind) {
  switch (kind) {
    case ChartKind::bar: return "bar";
    case ChartKind::strip: return "tick";
    case ChartKind::scatter: return "point";
    case ChartKind::heatmap: return "rect";
  }
  return "point";
}

}  // namespace

std::string_view to_string(ChartKind kind) {
  switch (kind) {
    case ChartKind::bar: return "bar";
    case ChartKind::strip: return "strip";
    case ChartKind::scatter: return "scatter";
    case ChartKind::heatmap: return "heatmap";
  }
  return "scatter";
}

ChartKind default_chart(std::optional<ColumnKind> x, std::optional<ColumnKind> y) {
  if (!x && !y) throw Error(ErrorCode::unsupported, "a chart needs an x or y encoding");
  if (!x || !y) return (x ? *x : *y) == ColumnKind::discrete ? ChartKind::bar : ChartKind::strip;
  if (*x == ColumnKind::continuous && *y == ColumnKind::continuous) return ChartKind::scatter;
  if (*x == ColumnKind::discrete && *y == ColumnKind::discrete) return ChartKind::heatmap;
  return ChartKind::strip;
}

FacetGrid facet_grid(const ChartSpec& spec, const Dataset& d) {
  FacetGrid grid;
  grid.row = spec.row;
  grid.column = spec.column;
  const Column* row_col = spec.row ? &discrete_facet(d, *spec.row) : nullptr;
  const Column* col_col = spec.column ? &discrete_facet(d, *spec.column) : nullptr;
  if (row_col) grid.row_levels = facet_levels(*row_col);
  if (col_col) grid.column_levels = facet_levels(*col_col);

  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < grid.n_rows(); ++i) {
    for (std::size_t j = 0; j < grid.n_columns(); ++j) {
      FacetCell cell;
      if (row_col) cell.row_level = grid.row_levels[i];
      if (col_col) cell.column_level = grid.column_levels[j];
      index[{cell.row_level.value_or(""), cell.column_level.value_or("")}] = grid.cells.size();
      grid.cells.push_back(std::move(cell));
    }
  }
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    std::string rk = row_col ? row_col->level_key(r).value_or(kMissingLevel) : "";
    std::string ck = col_col ? col_col->level_key(r).value_or(kMissingLevel) : "";
    grid.cells[index.at({rk, ck})].rows.push_back(r);
  }
  return grid;
}

CheckLayout compose_check(const ChartSpec& spec, const PredictiveTable& table) {
  const Dataset& d = table.observed;
  for (const auto* f : {&spec.x, &spec.y, &spec.row, &spec.column})
    if (*f && !d.has_column(**f))
      throw Error(ErrorCode::unknown_variable,
                  "chart field '" + **f + "' is not a column of the checked dataset", {{"variable", **f}});

  CheckLayout layout;
  layout.spec = spec;
  layout.outcome = table.outcome;
  layout.n_obs = table.n_obs();
  layout.records = table.record_count();
  layout.dropped = table.dropped;
  layout.facets = facet_grid(spec, d);

  const bool has_models = !table.models.empty();
  layout.residual_view = spec.show_residuals && has_models;
  if (layout.residual_view && spec.x != table.outcome && spec.y != table.outcome)
    throw Error(ErrorCode::unsupported, "the residual view needs the outcome '" + *table.outcome + "' on the x or y shelf");

  auto axis = [&](const std::optional<std::string>& field) -> std::optional<AxisScale> {
    if (!field) return std::nullopt;
    if (has_models && field == table.outcome) {
      if (layout.residual_view) return residual_scale(table);
      return outcome_scale(d.column(*field), table);
    }
    return column_scale(d.column(*field));
  };
  layout.x = axis(spec.x);
  layout.y = axis(spec.y);

  auto kind_of = [](const std::optional<AxisScale>& s) -> std::optional<ColumnKind> {
    if (!s) return std::nullopt;
    return s->quantitative ? ColumnKind::continuous : ColumnKind::discrete;
  };
  layout.kind = default_chart(kind_of(layout.x), kind_of(layout.y));

  layout.panels.push_back({kObservedSource, layout.kind, table.n_obs(), 0, true, {}});
  for (const auto& m : table.models) {
    std::size_t frames = std::count_if(table.blocks.begin(), table.blocks.end(),
                                       [&](const PredictedBlock& b) { return b.source == m.label; });
    layout.panels.push_back({m.label, layout.kind, frames * table.n_obs(), frames, m.converged, {}});
    if (layout.residual_view) {
      ResidualSeries series{m.label, {}};
      for (std::size_t i = 0; i < m.fitted.size(); ++i) series.values.push_back(table.observed_outcome[i] - m.fitted[i]);
      layout.panels.front().residuals.push_back(series);
      layout.panels.back().residuals.push_back(std::move(series));
    }
  }
  return layout;
}

CheckLayout plain_chart(const ChartSpec& spec, const Dataset& d) {
  PredictiveTable table;
  table.observed = d;
  table.rows.resize(d.n_rows());
  for (std::size_t i = 0; i < d.n_rows(); ++i) table.rows[i] = i;
  return compose_check(spec, table);
}

json to_json(const ChartSpec& spec) {
  return {{"x", optional_string(spec.x)},
          {"y", optional_string(spec.y)},
          {"row", optional_string(spec.row)},
          {"column", optional_string(spec.column)},
          {"show_residuals", spec.show_residuals}};
}

ChartSpec chart_spec_from_json(const json& j) {
  ChartSpec spec;
  auto get = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  spec.x = get("x");
  spec.y = get("y");
  spec.row = get("row");
  spec.column = get("column");
  spec.show_residuals = j.value("show_residuals", false);
  return spec;
}

json to_json(const CheckLayout& layout) {
  json encoding = json::object();
  encoding["x"] = field_json(layout.x);
  encoding["y"] = field_json(layout.y);
  encoding["row"] = optional_string(layout.facets.row);
  encoding["column"] = optional_string(layout.facets.column);
  if (layout.kind == ChartKind::bar) encoding[layout.x ? "y" : "x"] = {{"aggregate", "count"}, {"type", "quantitative"}};
  if (layout.kind == ChartKind::heatmap) encoding["opacity"] = {{"aggregate", "count"}, {"type", "quantitative"}};

  json scales{{"x", scale_json(layout.x)}, {"y", scale_json(layout.y)}};

  json cells = json::array();
  for (const auto& c : layout.facets.cells)
    cells.push_back({{"row", optional_string(c.row_level)}, {"column", optional_string(c.column_level)}, {"count", c.rows.size()}});
  json facets{{"row", optional_string(layout.facets.row)},
              {"column", optional_string(layout.facets.column)},
              {"row_levels", layout.facets.row_levels},
              {"column_levels", layout.facets.column_levels},
              {"cells", cells}};

  json panels = json::array();
  for (std::size_t i = 0; i < layout.panels.size(); ++i) {
    const auto& p = layout.panels[i];
    json animation = nullptr;
    if (p.frames > 0) animation = {{"field", "draw"}, {"frames", p.frames}};
    json panel{{"index", i},
               {"source", p.source},
               {"kind", std::string(to_string(p.kind))},
               {"mark", std::string(mark_for(p.kind))},
               {"data", {{"source", p.source}, {"records", p.records}}},
               {"animation", animation},
               {"converged", p.converged},
               {"scales", scales},
               {"facets", facets}};
    if (layout.residual_view) {
      json series = json::array();
      for (const auto& r : p.residuals) series.push_back({{"model", r.model}, {"values", r.values}});
      panel["residual_series"] = series;
    }
    panels.push_back(std::move(panel));
  }

  json reference = nullptr;
  if (layout.residual_view) reference = {{"axis", layout.x && layout.x->outcome ? "x" : "y"}, {"value", 0.0}};

  return {{"version", 1},
          {"chart",
           {{"kind", std::string(to_string(layout.kind))}, {"mark", std::string(mark_for(layout.kind))}, {"encoding", encoding}}},
          {"residual_view", layout.residual_view},
          {"reference_line", reference},
          {"scales", scales},
          {"facets", facets},
          {"panels", panels},
          {"table",
           {{"outcome", optional_string(layout.outcome)},
            {"n_obs", layout.n_obs},
            {"records", layout.records},
            {"dropped", layout.dropped},
            {"key", {"source", "draw", "row"}}}}};
}

}  // namespace evm
