#include "evm/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evm/error.hpp"

namespace evm {

namespace {

using nlohmann::json;

json cell_json(const Column& col, std::size_t row) {
  if (col.missing(row)) return nullptr;
  if (col.is_text()) return *col.text_at(row);
  return col.number(row);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_text(const Column& col, std::size_t row) {
  if (col.missing(row)) return "NA";
  return col.is_text() ? csv_escape(*col.text_at(row)) : format_number(col.number(row));
}

json outcome_value(const PredictiveTable& t, double v) {
  if (!t.outcome_levels.empty() && (v == 0.0 || v == 1.0)) return t.outcome_levels[v == 0.0 ? 0 : 1];
  if (!std::isfinite(v)) return nullptr;
  return v;
}

std::string outcome_text(const PredictiveTable& t, double v) {
  if (!t.outcome_levels.empty() && (v == 0.0 || v == 1.0)) return csv_escape(t.outcome_levels[v == 0.0 ? 0 : 1]);
  if (!std::isfinite(v)) return "NA";
  return format_number(v);
}

const std::vector<double>* fitted_for(const PredictiveTable& t, const std::string& label) {
  for (const auto& m : t.models)
    if (m.label == label) return &m.fitted;
  return nullptr;
}

std::vector<const Column*> predictor_columns(const PredictiveTable& t) {
  std::vector<const Column*> out;
  for (const auto& c : t.observed.columns())
    if (!t.outcome || c.name() != *t.outcome) out.push_back(&c);
  return out;
}

json scalar_json(const Scalar& s) {
  if (auto d = std::get_if<double>(&s)) return *d;
  return std::get<std::string>(s);
}

Filter filter_from_json(const json& j) {
  Filter f;
  f.column = j.at("column").get<std::string>();
  f.op = parse_filter_op(j.at("op").get<std::string>());
  f.mode = parse_filter_mode(j.value("mode", std::string("include")));
  const auto& v = j.at("value");
  if (v.is_number()) f.criterion = v.get<double>();
  else if (v.is_string()) f.criterion = v.get<std::string>();
  else throw Error(ErrorCode::parse_error, "filter value must be a number or a string");
  return f;
}

Transform transform_from_json(const json& j) {
  return {j.at("column").get<std::string>(), parse_transform_kind(j.at("kind").get<std::string>())};
}

template <typename Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed request: ") + e.what());
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

json schema_json(const Dataset& d) {
  json vars = json::array();
  for (const auto& c : d.columns()) {
    std::size_t missing = 0;
    for (std::size_t r = 0; r < c.size(); ++r) missing += c.missing(r) ? 1 : 0;
    json v{{"name", c.name()}, {"type", std::string(to_string(c.kind()))}, {"missing", missing}};
    if (c.kind() == ColumnKind::discrete) {
      v["levels"] = c.levels();
    } else {
      double lo = INFINITY, hi = -INFINITY;
      for (double x : c.numbers())
        if (!std::isnan(x)) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
      v["range"] = lo <= hi ? json{lo, hi} : json(nullptr);
    }
    vars.push_back(std::move(v));
  }
  json pipeline = json::array();
  for (const auto& s : d.pipeline()) pipeline.push_back(to_json(s));
  return {{"name", d.name()}, {"n_rows", d.n_rows()}, {"variables", vars}, {"pipeline", pipeline}};
}

json to_json(const PipelineStep& step) {
  if (auto f = std::get_if<Filter>(&step))
    return {{"type", "filter"},
            {"column", f->column},
            {"op", std::string(to_string(f->op))},
            {"mode", std::string(to_string(f->mode))},
            {"value", scalar_json(f->criterion)}};
  const auto& t = std::get<Transform>(step);
  return {{"type", "transform"}, {"column", t.column}, {"kind", std::string(to_string(t.kind))}};
}

std::vector<PipelineStep> pipeline_from_json(const json& j) {
  return guarded([&] {
    std::vector<PipelineStep> steps;
    if (j.contains("steps")) {
      for (const auto& s : j.at("steps")) {
        auto type = s.at("type").get<std::string>();
        if (type == "filter") steps.emplace_back(filter_from_json(s));
        else if (type == "transform") steps.emplace_back(transform_from_json(s));
        else throw Error(ErrorCode::parse_error, "unknown pipeline step type '" + type + "'");
      }
      return steps;
    }
    if (j.contains("filters"))
      for (const auto& s : j.at("filters")) steps.emplace_back(filter_from_json(s));
    if (j.contains("transforms"))
      for (const auto& s : j.at("transforms")) steps.emplace_back(transform_from_json(s));
    return steps;
  });
}

ModelSpec model_spec_from_json(const json& j) {
  return guarded([&] {
    auto family = parse_family(j.at("family").get<std::string>());
    std::string scale = j.contains("scale") && !j.at("scale").is_null() ? j.at("scale").get<std::string>() : "";
    std::string label = j.contains("label") && !j.at("label").is_null() ? j.at("label").get<std::string>() : "";
    return make_model_spec(family, j.at("location").get<std::string>(), scale, label);
  });
}

json model_summary_json(const FittedModel& m) {
  json scale = nullptr;
  if (m.spec.scale) scale = to_string(*m.spec.scale);
  return {{"label", m.spec.label},
          {"family", std::string(to_string(m.spec.family))},
          {"location", to_string(m.spec.location)},
          {"scale", scale},
          {"converged", m.converged},
          {"diagnostic", m.diagnostic},
          {"iterations", m.iterations},
          {"n_obs", m.n_obs},
          {"n_dropped", m.n_dropped},
          {"description", describe_model(m.spec)}};
}

json model_export_json(const FittedModel& m) {
  json out = model_summary_json(m);
  std::vector<std::string> labels = m.location.labels;
  if (m.scale) labels.insert(labels.end(), m.scale->labels.begin(), m.scale->labels.end());
  out["coefficient_labels"] = labels;
  out["n_location"] = m.n_location();
  out["beta"] = std::vector<double>(m.beta.data(), m.beta.data() + m.beta.size());
  out["covariance"] = matrix_json(m.covariance);
  out["log_lik"] = m.log_lik;
  out["gradient_norm"] = m.gradient_norm;
  json table = nullptr;
  if (m.converged) {
    table = json::array();
    for (const auto& row : coefficient_table(m))
      table.push_back({{"submodel", row.submodel}, {"label", row.label}, {"estimate", row.estimate}, {"std_error", row.std_error}});
  }
  out["coefficients"] = table;
  return out;
}

json residuals_json(const ResidualColumn& r, const std::string& model_label) {
  return {{"model", model_label}, {"rows", r.rows}, {"fitted", r.fitted}, {"residual", r.residual}};
}

json predictive_table_json(const PredictiveTable& t, bool with_residuals) {
  auto predictors = predictor_columns(t);
  json records = json::array();
  auto record = [&](const std::string& source, json draw, std::size_t i, std::optional<double> outcome,
                    const std::vector<double>* fitted) {
    json rec{{"source", source}, {"draw", std::move(draw)}, {"row", t.rows[i]}};
    for (const Column* c : predictors) rec[c->name()] = cell_json(*c, i);
    if (t.outcome) rec[*t.outcome] = outcome ? outcome_value(t, *outcome) : json(nullptr);
    if (with_residuals) rec["residual"] = fitted && outcome ? json(*outcome - (*fitted)[i]) : json(nullptr);
    records.push_back(std::move(rec));
  };
  for (std::size_t i = 0; i < t.n_obs(); ++i)
    record(kObservedSource, nullptr, i, t.outcome ? std::optional(t.observed_outcome[i]) : std::nullopt, nullptr);
  for (const auto& b : t.blocks) {
    const auto* fitted = fitted_for(t, b.source);
    for (std::size_t i = 0; i < t.n_obs(); ++i) record(b.source, b.draw_index, i, b.outcome[i], fitted);
  }

  json models = json::array();
  for (const auto& m : t.models)
    models.push_back({{"label", m.label}, {"family", std::string(to_string(m.family))}, {"converged", m.converged}});
  return {{"outcome", t.outcome ? json(*t.outcome) : json(nullptr)},
          {"key", {"source", "draw", "row"}},
          {"n_obs", t.n_obs()},
          {"dropped", t.dropped},
          {"models", models},
          {"records", records}};
}

std::string predictive_table_csv(const PredictiveTable& t, bool with_residuals) {
  auto predictors = predictor_columns(t);
  std::ostringstream out;
  out << "source,draw,row";
  for (const Column* c : predictors) out << ',' << csv_escape(c->name());
  if (t.outcome) out << ',' << csv_escape(*t.outcome);
  if (with_residuals) out << ",residual";
  out << '\n';
  auto line = [&](const std::string& source, const std::string& draw, std::size_t i, std::optional<double> v,
                  const std::vector<double>* fitted) {
    out << csv_escape(source) << ',' << draw << ',' << t.rows[i];
    for (const Column* c : predictors) out << ',' << cell_text(*c, i);
    if (t.outcome) out << ',' << (v ? outcome_text(t, *v) : "NA");
    if (with_residuals) out << ',' << (fitted && v ? format_number(*v - (*fitted)[i]) : "NA");
    out << '\n';
  };
  for (std::size_t i = 0; i < t.n_obs(); ++i)
    line(kObservedSource, "", i, t.outcome ? std::optional(t.observed_outcome[i]) : std::nullopt, nullptr);
  for (const auto& b : t.blocks) {
    const auto* fitted = fitted_for(t, b.source);
    for (std::size_t i = 0; i < t.n_obs(); ++i) line(b.source, std::to_string(b.draw_index), i, b.outcome[i], fitted);
  }
  return out.str();
}

}  // namespace evm
