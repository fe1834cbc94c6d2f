#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "evm/dataset.hpp"
#include "evm/fit.hpp"
#include "evm/formula.hpp"
#include "evm/predict.hpp"

namespace evm {

nlohmann::json schema_json(const Dataset& d);

// {"filters": [...], "transforms": [...]} or {"steps": [...]} in entry order.
std::vector<PipelineStep> pipeline_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineStep& step);

// {"family", "location", "scale"?, "label"?}
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Summary safe for the UI: no coefficients, standard errors or fit indices.
nlohmann::json model_summary_json(const FittedModel& m);
// Full export for the headless CLI: adds beta, covariance, log_lik and the
// coefficient table.
nlohmann::json model_export_json(const FittedModel& m);

nlohmann::json residuals_json(const ResidualColumn& r, const std::string& model_label);

// Long-format records keyed by (source, draw, row).
// with_residuals adds a "residual" field: predicted outcome minus the model's
// fitted mean for predicted records, null (NA in CSV) for observed ones.
nlohmann::json predictive_table_json(const PredictiveTable& table, bool with_residuals = false);
// Columns: source, draw, row, predictor columns..., outcome.
std::string predictive_table_csv(const PredictiveTable& table, bool with_residuals = false);

}  // namespace evm
