#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evm/dataset.hpp"
#include "evm/fit.hpp"

namespace evm {

struct ParamDraw {
  std::size_t draw_index = 0;
  Eigen::VectorXd beta;
};

// Draws from N(beta_hat, covariance) using a spectral square root with
// negative eigenvalues clamped to zero. Deterministic given the seed.
std::vector<ParamDraw> draw_parameters(const FittedModel& m, std::size_t n_draws, std::uint64_t seed);

// One simulated outcome per row of d, on the data scale.
struct PredictedOutcomes {
  std::vector<double> outcome;
};

PredictedOutcomes predictive_dataset(const FittedModel& m, const Dataset& d, const ParamDraw& draw, std::uint64_t seed);

// Response-scale residuals y - E[y | x, beta_hat] over the model's complete rows.
struct ResidualColumn {
  std::vector<std::size_t> rows;  // row indices in the dataset
  std::vector<double> fitted;
  std::vector<double> residual;
};

ResidualColumn residuals(const FittedModel& m, const Dataset& d);

// Per-row E[y | x, beta_hat].
std::vector<double> fitted_means(const FittedModel& m, const Dataset& d);

struct PredictedBlock {
  std::string source;  // model label
  std::size_t draw_index = 0;
  std::vector<double> outcome;  // aligned with PredictiveTable::observed rows
};

struct ModelSummary {
  std::string label;
  FamilyKind family = FamilyKind::normal;
  bool converged = false;
  std::vector<double> fitted;  // E[y | x, beta_hat] per observed row
};

// Observed rows plus one predicted block per (model, draw). The record key is
// (source, draw_index, row) where row indexes the dataset the check was built on.
struct PredictiveTable {
  Dataset observed;               // rows used by the check, every column kept
  std::vector<std::size_t> rows;  // row index in the input dataset per observed row
  std::optional<std::string> outcome;
  std::vector<std::string> outcome_levels;  // for text binary outcomes
  std::vector<double> observed_outcome;     // numeric outcome per observed row
  std::vector<ModelSummary> models;
  std::vector<PredictedBlock> blocks;
  std::size_t dropped = 0;  // rows removed for missing values in referenced columns

  std::size_t n_obs() const { return observed.n_rows(); }
  std::size_t record_count() const { return n_obs() * (1 + blocks.size()); }
};

inline constexpr const char* kObservedSource = "observed";

// Per-model seed: seed + FNV-1a hash of the label, so models do not perturb
// each other's draws.
std::uint64_t model_seed(std::uint64_t seed, const std::string& label);

PredictiveTable assemble_check(const Dataset& d, const std::vector<FittedModel>& models, std::size_t n_draws,
                               std::uint64_t seed);

}  // namespace evm
