#include "evm/predict.hpp"

#include <algorithm>
#include <set>

#include "evm/error.hpp"

namespace evm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void require_converged(const FittedModel& m) {
  if (!m.converged)
    throw Error(ErrorCode::fit_not_converged, "model did not converge",
                {{"model", m.spec.label}, {"diagnostic", m.diagnostic}});
}

std::vector<double> means_at(const FittedModel& m, const Dataset& d) {
  auto lp = linear_predictors(m, d, m.beta);
  std::vector<double> out(d.n_rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    out[i] = family_mean(m.spec.family, {lp.eta(r), lp.sigma(r)});
  }
  return out;
}

}  // namespace

std::vector<ParamDraw> draw_parameters(const FittedModel& m, std::size_t n_draws, std::uint64_t seed) {
  require_converged(m);
  if (n_draws == 0) throw Error(ErrorCode::domain_error, "n_draws must be at least 1");
  const auto p = m.beta.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.covariance);
  Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd factor = eig.eigenvectors() * root.asDiagonal();

  Rng rng(splitmix64(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ParamDraw> draws;
  draws.reserve(n_draws);
  Eigen::VectorXd z(p);
  for (std::size_t k = 0; k < n_draws; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) z(j) = normal(rng);
    draws.push_back({k, m.beta + factor * z});
  }
  return draws;
}

PredictedOutcomes predictive_dataset(const FittedModel& m, const Dataset& d, const ParamDraw& draw, std::uint64_t seed) {
  if (draw.beta.size() != m.beta.size())
    throw Error(ErrorCode::internal, "parameter draw has the wrong length");
  for (const auto& v : m.predictor_variables()) d.column(v);
  auto lp = linear_predictors(m, d, draw.beta);
  Rng rng(splitmix64(seed));
  PredictedOutcomes out;
  out.outcome.resize(d.n_rows());
  for (std::size_t i = 0; i < out.outcome.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    out.outcome[i] = sample_outcome(m.spec.family, {lp.eta(r), lp.sigma(r)}, rng);
  }
  return out;
}

std::vector<double> fitted_means(const FittedModel& m, const Dataset& d) {
  require_converged(m);
  return means_at(m, d);
}

ResidualColumn residuals(const FittedModel& m, const Dataset& d) {
  require_converged(m);
  auto vars = m.referenced_variables();
  ResidualColumn out;
  out.rows = complete_rows(d, vars);
  Dataset data = d.select_rows(out.rows);
  auto y = encode_outcome(data.column(*m.spec.location.response), m.spec.family);
  out.fitted = means_at(m, data);
  out.residual.resize(out.fitted.size());
  for (std::size_t i = 0; i < out.fitted.size(); ++i) out.residual[i] = y.values[i] - out.fitted[i];
  return out;
}

std::uint64_t model_seed(std::uint64_t seed, const std::string& label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return seed + h;
}

PredictiveTable assemble_check(const Dataset& d, const std::vector<FittedModel>& models, std::size_t n_draws,
                               std::uint64_t seed) {
  std::set<std::string> labels{kObservedSource};
  std::vector<std::string> vars;
  PredictiveTable table;
  for (const auto& m : models) {
    if (!labels.insert(m.spec.label).second)
      throw Error(ErrorCode::domain_error, "duplicate model label '" + m.spec.label + "'", {{"label", m.spec.label}});
    const auto& response = *m.spec.location.response;
    if (table.outcome && *table.outcome != response)
      throw Error(ErrorCode::unsupported, "models in one check must share an outcome ('" + *table.outcome + "' vs '" +
                                              response + "')");
    table.outcome = response;
    for (const auto& v : m.referenced_variables())
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
  }
  if (!models.empty() && n_draws == 0) throw Error(ErrorCode::domain_error, "n_draws must be at least 1");

  table.rows = complete_rows(d, vars);
  table.observed = d.select_rows(table.rows);
  table.dropped = d.n_rows() - table.rows.size();

  if (table.outcome) {
    FamilyKind family = models.front().spec.family;
    for (const auto& m : models)
      if (m.spec.family == FamilyKind::logistic) family = FamilyKind::logistic;
    auto coding = encode_outcome(table.observed.column(*table.outcome), family);
    table.observed_outcome = std::move(coding.values);
    table.outcome_levels = std::move(coding.levels);
  }

  for (const auto& m : models) {
    std::uint64_t base = model_seed(seed, m.spec.label);
    std::vector<ParamDraw> draws;
    if (m.converged) {
      draws = draw_parameters(m, n_draws, base);
    } else {
      // Non-converged fits still render: every draw uses the point estimate.
      for (std::size_t k = 0; k < n_draws; ++k) draws.push_back({k, m.beta});
    }
    table.models.push_back({m.spec.label, m.spec.family, m.converged, means_at(m, table.observed)});
    for (const auto& draw : draws) {
      auto predicted = predictive_dataset(m, table.observed, draw, splitmix64(base ^ (draw.draw_index + 1)));
      table.blocks.push_back({m.spec.label, draw.draw_index, std::move(predicted.outcome)});
    }
  }
  return table;
}

}  // namespace evm
