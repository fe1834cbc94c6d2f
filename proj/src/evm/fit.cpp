#include "evm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evm/error.hpp"
#include "evm/optimizer.hpp"

namespace evm {

namespace {

constexpr const char* kInterceptLabel = "(Intercept)";

struct EncodedColumn {
  std::string label;
  Eigen::VectorXd values;
};

// Discrete variables are treatment coded, or indicator coded over all levels
// when full is set.
std::vector<EncodedColumn> encode_variable(const Dataset& d, const VariableEncoding& var, bool full) {
  const Column& col = d.column(var.name);
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  std::vector<EncodedColumn> out;
  if (!var.discrete) {
    EncodedColumn c{var.name, Eigen::VectorXd(n)};
    for (Eigen::Index r = 0; r < n; ++r) c.values(r) = col.number(static_cast<std::size_t>(r));
    out.push_back(std::move(c));
    return out;
  }
  std::vector<std::size_t> codes(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < codes.size(); ++r) {
    auto key = col.level_key(r);
    auto it = std::find(var.levels.begin(), var.levels.end(), *key);
    if (it == var.levels.end())
      throw Error(ErrorCode::domain_error, "level '" + *key + "' of '" + var.name + "' was not present when the model was fit",
                  {{"variable", var.name}, {"level", *key}, {"row", r}});
    codes[r] = static_cast<std::size_t>(it - var.levels.begin());
  }
  for (std::size_t level = full ? 0 : 1; level < var.levels.size(); ++level) {
    EncodedColumn c{var.name + var.levels[level], Eigen::VectorXd(n)};
    for (Eigen::Index r = 0; r < n; ++r) c.values(r) = codes[static_cast<std::size_t>(r)] == level ? 1.0 : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

void require_complete(const Dataset& d, const std::vector<std::string>& variables) {
  for (const auto& v : variables) {
    const Column& col = d.column(v);
    for (std::size_t r = 0; r < d.n_rows(); ++r)
      if (col.missing(r))
        throw Error(ErrorCode::domain_error, "missing value in '" + v + "' at row " + std::to_string(r),
                    {{"variable", v}, {"row", r}});
  }
}

// Which discrete variables of each term get indicator columns for every level.
// A variable is treatment coded when the term without it is already in the
// model (the empty term being the intercept); otherwise the reference level
// would be absorbed by nothing. Without an intercept the first discrete
// variable in the formula is also fully coded.
std::vector<std::vector<bool>> full_coding(const DesignEncoding& enc) {
  const auto& terms = enc.formula.terms;
  auto discrete = [&](const std::string& v) { return enc.variable(v).discrete; };
  std::vector<std::vector<bool>> out;
  bool first_factor_pending = !enc.formula.intercept;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    std::vector<bool> flags(terms[t].variables.size(), false);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      const auto& v = terms[t].variables[i];
      if (!discrete(v)) continue;
      if (first_factor_pending) {
        flags[i] = true;
        first_factor_pending = false;
        continue;
      }
      Term margin{terms[t].variables};
      margin.variables.erase(margin.variables.begin() + static_cast<std::ptrdiff_t>(i));
      bool present = margin.variables.empty();
      for (std::size_t u = 0; u < t && !present; ++u) present = terms[u].same_set(margin);
      flags[i] = !present;
    }
    out.push_back(std::move(flags));
  }
  return out;
}

Eigen::MatrixXd assemble(const Dataset& d, DesignEncoding& enc, bool record_layout) {
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  std::vector<EncodedColumn> columns;
  if (enc.formula.intercept) columns.push_back({kInterceptLabel, Eigen::VectorXd::Ones(n)});

  std::vector<std::vector<EncodedColumn>> contrasts;
  std::vector<std::vector<EncodedColumn>> indicators;
  for (const auto& var : enc.variables) {
    contrasts.push_back(encode_variable(d, var, false));
    indicators.push_back(var.discrete ? encode_variable(d, var, true) : std::vector<EncodedColumn>{});
  }
  auto encoded = [&](const std::string& name, bool full) -> const std::vector<EncodedColumn>& {
    for (std::size_t i = 0; i < enc.variables.size(); ++i)
      if (enc.variables[i].name == name) return full ? indicators[i] : contrasts[i];
    throw Error(ErrorCode::internal, "variable '" + name + "' missing from encoding");
  };
  const auto full = full_coding(enc);

  if (record_layout) enc.term_columns.clear();
  for (std::size_t t = 0; t < enc.formula.terms.size(); ++t) {
    const auto& term = enc.formula.terms[t];
    // The first variable varies fastest across the produced columns.
    std::vector<EncodedColumn> acc{{"", Eigen::VectorXd::Ones(n)}};
    for (std::size_t i = 0; i < term.variables.size(); ++i) {
      std::vector<EncodedColumn> next;
      for (const auto& part : encoded(term.variables[i], full[t][i]))
        for (const auto& prefix : acc)
          next.push_back({prefix.label.empty() ? part.label : prefix.label + ":" + part.label,
                          prefix.values.cwiseProduct(part.values)});
      acc = std::move(next);
    }
    std::vector<std::size_t> indices;
    for (auto& c : acc) {
      indices.push_back(columns.size());
      columns.push_back(std::move(c));
    }
    if (record_layout) enc.term_columns.push_back(std::move(indices));
  }

  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
  if (record_layout) enc.labels.clear();
  for (std::size_t j = 0; j < columns.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = columns[j].values;
    if (record_layout) enc.labels.push_back(columns[j].label);
  }
  return x;
}

// Coefficients of aliased columns are not identified. Reports each column that
// lies in the span of the columns before it.
void require_full_rank(const DesignMatrix& m) {
  const Eigen::MatrixXd& x = m.values;
  if (x.cols() == 0) return;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() == x.cols()) return;
  std::vector<std::string> aliased;
  Eigen::Index rank = 0;
  for (Eigen::Index j = 1; j <= x.cols(); ++j) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> part(x.leftCols(j));
    if (part.rank() == rank) aliased.push_back(m.labels()[static_cast<std::size_t>(j - 1)]);
    rank = part.rank();
  }
  std::string list;
  for (const auto& a : aliased) list += (list.empty() ? "" : ", ") + a;
  throw Error(ErrorCode::domain_error, "design matrix is rank deficient; aliased columns: " + list,
              {{"columns", aliased}, {"formula", to_string(m.encoding.formula)}});
}

struct Problem {
  Dataset data;
  std::vector<std::size_t> rows;  // indices into the input dataset
  OutcomeCoding outcome;
  DesignMatrix location;
  std::optional<DesignMatrix> scale;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sd(const std::vector<double>& v, double center) {
  double s = 0.0;
  for (double x : v) s += (x - center) * (x - center);
  return std::sqrt(s / v.size());
}

// Location intercept from the mean on the link scale, scale intercept from the
// spread of link-scale residuals (moment estimate of the dispersion for NB).
Eigen::VectorXd initial_beta(FamilyKind family, const std::vector<double>& y, const DesignEncoding& location,
                             const std::optional<DesignEncoding>& scale) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(location.n_columns() + (scale ? scale->n_columns() : 0)));
  std::vector<double> transformed = y;
  if (family == FamilyKind::log_normal)
    for (auto& v : transformed) v = std::log(v);
  if (family == FamilyKind::logit_normal)
    for (auto& v : transformed) v = logit(v);
  double center = mean(transformed);
  double intercept = 0.0;
  switch (family) {
    case FamilyKind::normal:
    case FamilyKind::log_normal:
    case FamilyKind::logit_normal: intercept = center; break;
    case FamilyKind::logistic: intercept = logit(std::clamp(center, 1e-4, 1.0 - 1e-4)); break;
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: intercept = std::log(std::max(center, 1e-4)); break;
  }
  if (location.formula.intercept) beta(0) = intercept;
  if (scale && scale->formula.intercept) {
    double log_sigma = 0.0;
    if (family == FamilyKind::negative_binomial) {
      double m = std::max(center, 1e-4);
      double var = sd(y, center);
      var *= var;
      double inv_theta = std::max((var - m) / (m * m), 1e-2);
      log_sigma = 0.5 * std::log(inv_theta);
    } else {
      log_sigma = std::log(std::max(sd(transformed, center), 1e-8 * (1.0 + std::abs(center))));
    }
    beta(static_cast<Eigen::Index>(location.n_columns())) = log_sigma;
  }
  return beta;
}

Problem prepare(const Dataset& d, const ModelSpec& spec) {
  validate_spec(spec, d);
  std::vector<std::string> vars = spec.location.variables();
  if (spec.scale)
    for (const auto& v : spec.scale->variables())
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);

  Problem p;
  p.rows = complete_rows(d, vars);
  p.data = d.select_rows(p.rows);
  if (p.data.n_rows() == 0)
    throw Error(ErrorCode::domain_error, "empty dataset: no complete rows to fit",
                {{"dropped", d.n_rows()}});

  p.outcome = encode_outcome(p.data.column(*spec.location.response), spec.family);
  std::vector<std::size_t> offending;
  for (std::size_t i = 0; i < p.outcome.values.size(); ++i)
    if (!in_support(spec.family, p.outcome.values[i])) offending.push_back(p.rows[i]);
  if (!offending.empty())
    throw Error(ErrorCode::domain_error,
                "undefined likelihood: " + std::to_string(offending.size()) + " value(s) of '" +
                    *spec.location.response + "' lie outside the " + std::string(to_string(spec.family)) +
                    " support (" + std::string(support_description(spec.family)) + ")",
                {{"family", std::string(to_string(spec.family))}, {"rows", offending}});

  p.location = build_design_matrix(p.data, spec.location);
  if (auto s = spec.effective_scale()) p.scale = build_design_matrix(p.data, *s);
  return p;
}

// Flags optima that sit on the boundary of the parameter space.
std::string boundary_diagnostic(const LogLikelihood& ll, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = ll.location_predictor(beta);
  Eigen::VectorXd log_sigma = ll.log_scale_predictor(beta);
  switch (ll.family()) {
    case FamilyKind::logistic:
      if (eta.cwiseAbs().maxCoeff() > 25.0) return "separation: fitted probabilities reach 0 or 1";
      break;
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial:
      if (eta.minCoeff() < -25.0) return "fitted mean collapses to zero";
      if (ll.family() == FamilyKind::negative_binomial && log_sigma.maxCoeff() > 15.0)
        return "dispersion diverges";
      // theta above e^16: the likelihood is flat toward the poisson limit
      if (ll.family() == FamilyKind::negative_binomial && log_sigma.minCoeff() < -8.0)
        return "dispersion vanishes: no overdispersion relative to poisson";
      break;
    default: {
      double floor = std::log(1e-8);
      if (log_sigma.minCoeff() < floor) return "degenerate scale: fitted sigma collapses to zero";
    }
  }
  return {};
}

bool near_boundary(const LogLikelihood& ll, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = ll.location_predictor(beta);
  Eigen::VectorXd log_sigma = ll.log_scale_predictor(beta);
  switch (ll.family()) {
    case FamilyKind::logistic: return eta.cwiseAbs().maxCoeff() > 8.0;
    case FamilyKind::poisson: return eta.minCoeff() < -8.0;
    case FamilyKind::negative_binomial: return eta.minCoeff() < -8.0 || log_sigma.maxCoeff() > 5.0;
    default: return log_sigma.minCoeff() < std::log(1e-4);
  }
}

}  // namespace

const VariableEncoding& DesignEncoding::variable(const std::string& name) const {
  for (const auto& v : variables)
    if (v.name == name) return v;
  throw Error(ErrorCode::unknown_variable, "unknown variable '" + name + "'", {{"variable", name}});
}

std::vector<std::pair<std::string, std::string>> DesignMatrix::reference_levels() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& v : encoding.variables)
    if (v.discrete) out.emplace_back(v.name, v.levels.front());
  return out;
}

DesignMatrix build_design_matrix(const Dataset& d, const FormulaAST& f) {
  if (d.n_rows() == 0) throw Error(ErrorCode::domain_error, "empty dataset");
  DesignMatrix out;
  out.encoding.formula = f;
  std::vector<std::string> predictors;
  for (const auto& t : f.terms)
    for (const auto& v : t.variables)
      if (std::find(predictors.begin(), predictors.end(), v) == predictors.end()) predictors.push_back(v);
  require_complete(d, predictors);
  for (const auto& name : predictors) {
    const Column& col = d.column(name);
    VariableEncoding var{name, col.kind() == ColumnKind::discrete, {}};
    if (var.discrete) {
      var.levels = col.levels();
      if (var.levels.size() < 2)
        throw Error(ErrorCode::domain_error, "no contrast possible: discrete predictor '" + name + "' has a single level",
                    {{"variable", name}});
    }
    out.encoding.variables.push_back(std::move(var));
  }
  out.values = assemble(d, out.encoding, true);
  require_full_rank(out);
  return out;
}

Eigen::MatrixXd apply_encoding(const Dataset& d, const DesignEncoding& encoding) {
  std::vector<std::string> names;
  for (const auto& v : encoding.variables) names.push_back(v.name);
  require_complete(d, names);
  DesignEncoding copy = encoding;
  return assemble(d, copy, false);
}

OutcomeCoding encode_outcome(const Column& column, FamilyKind family) {
  OutcomeCoding out;
  out.values.resize(column.size());
  if (column.is_numeric()) {
    for (std::size_t r = 0; r < column.size(); ++r) out.values[r] = column.number(r);
    return out;
  }
  out.levels = column.levels();
  if (family != FamilyKind::logistic || out.levels.size() != 2)
    throw Error(ErrorCode::domain_error,
                "outcome '" + column.name() + "' is text; only a two-level text outcome with the logistic family is supported",
                {{"variable", column.name()}, {"levels", out.levels}});
  for (std::size_t r = 0; r < column.size(); ++r) out.values[r] = *column.text_at(r) == out.levels[0] ? 0.0 : 1.0;
  return out;
}

LogLikelihood::LogLikelihood(FamilyKind family, Eigen::VectorXd y, Eigen::MatrixXd x_location,
                             std::optional<Eigen::MatrixXd> x_scale)
    : family_(family), y_(std::move(y)), x_location_(std::move(x_location)), x_scale_(std::move(x_scale)) {
  if (has_scale(family_) && !x_scale_) x_scale_ = Eigen::MatrixXd::Ones(y_.size(), 1);
  if (!has_scale(family_)) x_scale_.reset();
}

std::size_t LogLikelihood::n_parameters() const {
  return n_location() + (x_scale_ ? static_cast<std::size_t>(x_scale_->cols()) : 0);
}

Eigen::VectorXd LogLikelihood::location_predictor(const Eigen::VectorXd& beta) const {
  return x_location_ * beta.head(x_location_.cols());
}

Eigen::VectorXd LogLikelihood::log_scale_predictor(const Eigen::VectorXd& beta) const {
  if (!x_scale_) return Eigen::VectorXd::Zero(y_.size());
  return *x_scale_ * beta.tail(x_scale_->cols());
}

double LogLikelihood::value(const Eigen::VectorXd& beta) const {
  Eigen::VectorXd unused;
  return value(beta, unused);
}

double LogLikelihood::value(const Eigen::VectorXd& beta, Eigen::VectorXd& gradient) const {
  Eigen::VectorXd eta = location_predictor(beta);
  Eigen::VectorXd log_sigma = log_scale_predictor(beta);
  Eigen::VectorXd d_mu(y_.size()), d_ls(y_.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    auto t = log_likelihood_terms(family_, y_(i), eta(i), log_sigma(i));
    total += t.value;
    d_mu(i) = t.d_mu;
    d_ls(i) = t.d_log_sigma;
  }
  gradient.resize(static_cast<Eigen::Index>(n_parameters()));
  gradient.head(x_location_.cols()) = x_location_.transpose() * d_mu;
  if (x_scale_) gradient.tail(x_scale_->cols()) = x_scale_->transpose() * d_ls;
  return std::isnan(total) ? -std::numeric_limits<double>::infinity() : total;
}

std::vector<std::string> FittedModel::referenced_variables() const {
  std::vector<std::string> out = spec.location.variables();
  for (const auto& v : predictor_variables())
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

std::vector<std::string> FittedModel::predictor_variables() const {
  std::vector<std::string> out;
  auto add = [&](const DesignEncoding& e) {
    for (const auto& v : e.variables)
      if (std::find(out.begin(), out.end(), v.name) == out.end()) out.push_back(v.name);
  };
  add(location);
  if (scale) add(*scale);
  return out;
}

Eigen::MatrixXd observed_covariance(const LogLikelihood& ll, const Eigen::VectorXd& beta) {
  const auto p = beta.size();
  ObjectiveFn neg = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g) {
    double v = ll.value(b, g);
    g = -g;
    return -v;
  };
  Eigen::MatrixXd information = numerical_hessian(neg, beta, 1e-5);
  if (!information.allFinite()) return Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  Eigen::LLT<Eigen::MatrixXd> llt(information);
  if (llt.info() != Eigen::Success) llt.compute(information + 1e-8 * identity);
  Eigen::MatrixXd cov;
  if (llt.info() == Eigen::Success) {
    cov = llt.solve(identity);
  } else {
    // Not positive definite even after the ridge: invert the positive part.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information + 1e-8 * identity);
    Eigen::VectorXd inv = eig.eigenvalues().unaryExpr([](double v) { return v > 1e-12 ? 1.0 / v : 0.0; });
    cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }
  return 0.5 * (cov + cov.transpose());
}

FittedModel fit_model(const Dataset& d, const ModelSpec& spec, const FitOptions& options) {
  Problem p = prepare(d, spec);
  FittedModel m;
  m.spec = spec;
  m.location = p.location.encoding;
  if (p.scale) m.scale = p.scale->encoding;
  m.outcome_levels = p.outcome.levels;
  m.n_obs = p.data.n_rows();
  m.n_dropped = d.n_rows() - m.n_obs;

  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(p.outcome.values.data(), static_cast<Eigen::Index>(p.outcome.values.size()));
  std::optional<Eigen::MatrixXd> x_scale;
  if (p.scale) x_scale = p.scale->values;
  LogLikelihood ll(spec.family, y, p.location.values, x_scale);

  Eigen::VectorXd beta0 = initial_beta(spec.family, p.outcome.values, m.location, m.scale);
  const auto n_params = beta0.size();

  // A constant outcome on the transformed scale makes the likelihood unbounded.
  if (has_scale(spec.family) && spec.family != FamilyKind::negative_binomial) {
    std::vector<double> t = p.outcome.values;
    if (spec.family == FamilyKind::log_normal) for (auto& v : t) v = std::log(v);
    if (spec.family == FamilyKind::logit_normal) for (auto& v : t) v = logit(v);
    if (std::all_of(t.begin(), t.end(), [&](double v) { return v == t.front(); })) {
      m.beta = beta0;
      m.covariance = Eigen::MatrixXd::Zero(n_params, n_params);
      m.log_lik = ll.value(beta0);
      m.converged = false;
      m.diagnostic = "degenerate scale: outcome is constant, so the likelihood is unbounded as sigma -> 0";
      return m;
    }
  }

  ObjectiveFn objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g) {
    double v = ll.value(b, g);
    g = -g;
    return -v;
  };

  MinimizeOptions mo;
  mo.max_iterations = options.max_iterations;
  mo.relative_tolerance = options.relative_tolerance;
  mo.gradient_tolerance = options.gradient_tolerance;
  mo.gradient_scale = static_cast<double>(m.n_obs);

  std::optional<Eigen::MatrixXd> seed;
  Eigen::MatrixXd h0 = numerical_hessian(objective, beta0);
  if (h0.allFinite()) {
    Eigen::LLT<Eigen::MatrixXd> llt(h0);
    if (llt.info() == Eigen::Success) seed = llt.solve(Eigen::MatrixXd::Identity(n_params, n_params));
  }
  MinimizeResult result = minimize_bfgs(objective, beta0, mo, seed);
  if (!result.converged && result.value == result.value)
    result = polish_newton(objective, std::move(result), mo, 25);

  m.beta = result.x;
  m.log_lik = -result.value;
  m.iterations = result.iterations;
  m.gradient_norm = result.scaled_gradient_norm(mo.gradient_scale);
  m.converged = result.converged && m.beta.allFinite() && std::isfinite(m.log_lik);
  m.diagnostic = m.converged ? "" : result.status;
  if (m.beta.allFinite()) {
    auto boundary = boundary_diagnostic(ll, m.beta);
    // A gradient tolerance can be met while coefficients are still running off
    // to infinity (separation, empty count cells, vanishing scales). Fits that
    // approach the boundary are pushed further to see where they go.
    if (boundary.empty() && near_boundary(ll, m.beta)) {
      MinimizeOptions probe = mo;
      probe.gradient_tolerance = 0.0;
      probe.relative_tolerance = 0.0;
      probe.max_iterations = 300;
      auto pushed = minimize_bfgs(objective, m.beta, probe);
      if (pushed.x.allFinite()) boundary = boundary_diagnostic(ll, pushed.x);
    }
    if (!boundary.empty()) {
      m.converged = false;
      m.diagnostic = boundary;
    }
    m.covariance = observed_covariance(ll, m.beta);
  } else {
    m.covariance = Eigen::MatrixXd::Zero(n_params, n_params);
  }
  return m;
}

std::vector<CoefficientRow> coefficient_table(const FittedModel& m) {
  if (!m.converged)
    throw Error(ErrorCode::fit_not_converged, "model did not converge",
                {{"model", m.spec.label}, {"diagnostic", m.diagnostic}});
  std::vector<CoefficientRow> rows;
  Eigen::Index j = 0;
  for (const auto& label : m.location.labels) {
    rows.push_back({"location", label, m.beta(j), std::sqrt(std::max(m.covariance(j, j), 0.0))});
    ++j;
  }
  if (m.scale)
    for (const auto& label : m.scale->labels) {
      rows.push_back({"scale", label, m.beta(j), std::sqrt(std::max(m.covariance(j, j), 0.0))});
      ++j;
    }
  return rows;
}

LinearPredictors linear_predictors(const FittedModel& m, const Dataset& d, const Eigen::VectorXd& beta) {
  const auto nl = static_cast<Eigen::Index>(m.n_location());
  LinearPredictors out;
  out.eta = apply_encoding(d, m.location) * beta.head(nl);
  if (m.scale)
    out.sigma = (apply_encoding(d, *m.scale) * beta.tail(static_cast<Eigen::Index>(m.n_scale()))).array().exp();
  else
    out.sigma = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d.n_rows()));
  return out;
}

}  // namespace evm
