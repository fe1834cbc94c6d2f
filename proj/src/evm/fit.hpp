#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evm/dataset.hpp"
#include "evm/formula.hpp"

namespace evm {

// How one variable enters a design matrix. Discrete variables carry their
// levels in canonical order; levels[0] is the held-out reference level.
struct VariableEncoding {
  std::string name;
  bool discrete = false;
  std::vector<std::string> levels;
};

// Everything needed to rebuild a design matrix for new rows.
struct DesignEncoding {
  FormulaAST formula;
  std::vector<VariableEncoding> variables;
  std::vector<std::string> labels;
  // term_columns[t] lists the columns produced by formula.terms[t].
  std::vector<std::vector<std::size_t>> term_columns;

  const VariableEncoding& variable(const std::string& name) const;
  std::size_t n_columns() const { return labels.size(); }
};

struct DesignMatrix {
  Eigen::MatrixXd values;
  DesignEncoding encoding;

  const std::vector<std::string>& labels() const { return encoding.labels; }
  // discrete variable -> reference level
  std::vector<std::pair<std::string, std::string>> reference_levels() const;
};

// Column order: intercept, then terms in canonical order. Discrete levels are
// treatment coded against their first level unless the term's margin is absent
// from the model, in which case every level gets an indicator column. Throws
// domain_error when the resulting columns are linearly dependent.
DesignMatrix build_design_matrix(const Dataset& d, const FormulaAST& f);
// Rebuilds with a fixed encoding; a level unseen at encoding time is an error.
Eigen::MatrixXd apply_encoding(const Dataset& d, const DesignEncoding& encoding);

// Outcome column as numbers. Two-level text columns map their levels in
// lexicographic order to 0 and 1 (logistic family only).
struct OutcomeCoding {
  std::vector<double> values;
  std::vector<std::string> levels;  // non-empty for text outcomes
};
OutcomeCoding encode_outcome(const Column& column, FamilyKind family);

// Joint log-likelihood over location coefficients followed by scale
// coefficients, with its analytic gradient.
class LogLikelihood {
 public:
  LogLikelihood(FamilyKind family, Eigen::VectorXd y, Eigen::MatrixXd x_location,
                std::optional<Eigen::MatrixXd> x_scale);

  FamilyKind family() const { return family_; }
  std::size_t n_obs() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t n_location() const { return static_cast<std::size_t>(x_location_.cols()); }
  std::size_t n_parameters() const;
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x_location() const { return x_location_; }
  const std::optional<Eigen::MatrixXd>& x_scale() const { return x_scale_; }

  double value(const Eigen::VectorXd& beta) const;
  double value(const Eigen::VectorXd& beta, Eigen::VectorXd& gradient) const;

  Eigen::VectorXd location_predictor(const Eigen::VectorXd& beta) const;
  // log(sigma) per row; zeros for families without a scale parameter.
  Eigen::VectorXd log_scale_predictor(const Eigen::VectorXd& beta) const;

 private:
  FamilyKind family_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_location_;
  std::optional<Eigen::MatrixXd> x_scale_;
};

struct FitOptions {
  std::size_t max_iterations = 500;
  double relative_tolerance = 1e-10;
  // Applied to the max-norm of the gradient of the mean log-likelihood.
  double gradient_tolerance = 1e-6;
};

struct FittedModel {
  ModelSpec spec;
  DesignEncoding location;
  std::optional<DesignEncoding> scale;
  std::vector<std::string> outcome_levels;
  Eigen::VectorXd beta;  // location coefficients, then scale coefficients
  Eigen::MatrixXd covariance;
  double log_lik = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t n_obs = 0;
  std::size_t n_dropped = 0;  // rows removed for missing values
  double gradient_norm = 0.0;
  std::string diagnostic;

  std::size_t n_location() const { return location.n_columns(); }
  std::size_t n_scale() const { return scale ? scale->n_columns() : 0; }
  std::vector<std::string> referenced_variables() const;
  std::vector<std::string> predictor_variables() const;
};

FittedModel fit_model(const Dataset& d, const ModelSpec& spec, const FitOptions& options = {});

// Inverse of the observed information by central differences of the analytic
// gradient, ridge-repaired when the information is not positive definite.
Eigen::MatrixXd observed_covariance(const LogLikelihood& ll, const Eigen::VectorXd& beta);

struct CoefficientRow {
  std::string submodel;  // "location" or "scale"
  std::string label;
  double estimate = 0.0;
  double std_error = 0.0;
};

std::vector<CoefficientRow> coefficient_table(const FittedModel& m);

// Per-row linear predictors of a fitted model evaluated on d at coefficients beta.
struct LinearPredictors {
  Eigen::VectorXd eta;
  Eigen::VectorXd sigma;  // ones for families without a scale parameter
};
LinearPredictors linear_predictors(const FittedModel& m, const Dataset& d, const Eigen::VectorXd& beta);

}  // namespace evm
