#include "evm/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "evm/error.hpp"

namespace evm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Below this count, gamma-function ratios are evaluated as exact finite sums.
constexpr double kSeriesLimit = 1000.0;

double log_inverse_logit(double eta) {
  return eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

double log_add_exp(double a, double b) {
  double hi = std::max(a, b);
  double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// lgamma(y + theta) - lgamma(theta)
double log_rising_factorial(double y, double theta) {
  if (y <= kSeriesLimit) {
    double s = 0.0;
    for (double k = 0.0; k < y; k += 1.0) s += std::log(theta + k);
    return s;
  }
  return std::lgamma(y + theta) - std::lgamma(theta);
}

// digamma(y + theta) - digamma(theta)
double digamma_difference(double y, double theta) {
  if (y <= kSeriesLimit) {
    double s = 0.0;
    for (double k = 0.0; k < y; k += 1.0) s += 1.0 / (theta + k);
    return s;
  }
  return digamma(y + theta) - digamma(theta);
}

LogLikTerms gaussian_terms(double z_value, double mu, double log_sigma) {
  double sigma = std::exp(log_sigma);
  double z = (z_value - mu) / sigma;
  return {-kHalfLog2Pi - log_sigma - 0.5 * z * z, z / sigma, z * z - 1.0};
}

void require_params(FamilyKind kind, const FamilyParams& p) {
  if (!std::isfinite(p.mu))
    throw Error(ErrorCode::domain_error, "location parameter must be finite", {{"family", std::string(to_string(kind))}});
  if (has_scale(kind) && !(p.sigma > 0.0 && std::isfinite(p.sigma)))
    throw Error(ErrorCode::domain_error, "scale parameter must be positive and finite",
                {{"family", std::string(to_string(kind))}, {"sigma", p.sigma}});
}

struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch nodes and weights for the physicists' Hermite weight exp(-x^2).
const GaussHermite& gauss_hermite_256() {
  static const GaussHermite rule = [] {
    constexpr int n = 256;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    GaussHermite out;
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
      double v0 = solver.eigenvectors()(0, i);
      out.nodes.push_back(solver.eigenvalues()(i));
      out.weights.push_back(sqrt_pi * v0 * v0);
    }
    return out;
  }();
  return rule;
}

}  // namespace

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::normal: return "normal";
    case FamilyKind::log_normal: return "log_normal";
    case FamilyKind::logit_normal: return "logit_normal";
    case FamilyKind::logistic: return "logistic";
    case FamilyKind::poisson: return "poisson";
    case FamilyKind::negative_binomial: return "negative_binomial";
  }
  return "normal";
}

FamilyKind parse_family(std::string_view text) {
  for (auto k : kAllFamilies)
    if (to_string(k) == text) return k;
  throw Error(ErrorCode::parse_error, "unknown family '" + std::string(text) + "'", {{"family", std::string(text)}});
}

bool has_scale(FamilyKind kind) { return kind != FamilyKind::logistic && kind != FamilyKind::poisson; }

bool is_count(FamilyKind kind) { return kind == FamilyKind::poisson || kind == FamilyKind::negative_binomial; }

bool in_support(FamilyKind kind, double y) {
  if (!std::isfinite(y)) return false;
  switch (kind) {
    case FamilyKind::normal: return true;
    case FamilyKind::log_normal: return y > 0.0;
    case FamilyKind::logit_normal: return y > 0.0 && y < 1.0;
    case FamilyKind::logistic: return y == 0.0 || y == 1.0;
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: return y >= 0.0 && std::floor(y) == y;
  }
  return false;
}

std::string_view support_description(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::normal: return "real numbers";
    case FamilyKind::log_normal: return "positive reals";
    case FamilyKind::logit_normal: return "reals in (0, 1)";
    case FamilyKind::logistic: return "{0, 1}";
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: return "non-negative integers";
  }
  return "";
}

double inverse_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double digamma(double x) {
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
  return result;
}

double location_link(FamilyKind kind, double mu_response) {
  auto fail = [&](std::string_view domain) -> double {
    throw Error(ErrorCode::domain_error,
                std::string(to_string(kind)) + " link requires a location in " + std::string(domain),
                {{"family", std::string(to_string(kind))}, {"value", mu_response}});
  };
  switch (kind) {
    case FamilyKind::normal:
      if (!std::isfinite(mu_response)) return fail("the real numbers");
      return mu_response;
    case FamilyKind::log_normal:
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial:
      if (!(mu_response > 0.0) || !std::isfinite(mu_response)) return fail("(0, inf)");
      return std::log(mu_response);
    case FamilyKind::logit_normal:
    case FamilyKind::logistic:
      if (!(mu_response > 0.0 && mu_response < 1.0)) return fail("(0, 1)");
      return logit(mu_response);
  }
  return mu_response;
}

double location_inverse_link(FamilyKind kind, double eta) {
  switch (kind) {
    case FamilyKind::normal: return eta;
    case FamilyKind::log_normal:
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: return std::exp(eta);
    case FamilyKind::logit_normal:
    case FamilyKind::logistic: return inverse_logit(eta);
  }
  return eta;
}

LogLikTerms log_likelihood_terms(FamilyKind kind, double y, double mu, double log_sigma) {
  switch (kind) {
    case FamilyKind::normal: return gaussian_terms(y, mu, log_sigma);
    case FamilyKind::log_normal: {
      double ly = std::log(y);
      auto t = gaussian_terms(ly, mu, log_sigma);
      t.value -= ly;
      return t;
    }
    case FamilyKind::logit_normal: {
      auto t = gaussian_terms(logit(y), mu, log_sigma);
      t.value -= std::log(y) + std::log1p(-y);
      return t;
    }
    case FamilyKind::logistic: {
      double value = y == 1.0 ? log_inverse_logit(mu) : log_inverse_logit(-mu);
      return {value, y - inverse_logit(mu), 0.0};
    }
    case FamilyKind::poisson: {
      double lambda = std::exp(mu);
      return {y * mu - lambda - std::lgamma(y + 1.0), y - lambda, 0.0};
    }
    case FamilyKind::negative_binomial: {
      double log_theta = -2.0 * log_sigma;
      double theta = std::exp(log_theta);
      double lambda = std::exp(mu);
      double log_total = log_add_exp(log_theta, mu);  // ln(theta + lambda)
      double total = theta + lambda;
      // theta * ln(theta / (theta + lambda)), evaluated without cancellation
      double theta_term = mu < log_theta ? -theta * std::log1p(lambda / theta) : theta * (log_theta - log_total);
      double value = log_rising_factorial(y, theta) - std::lgamma(y + 1.0) + theta_term + y * (mu - log_total);
      double d_mu = theta * (y - lambda) / total;
      double log_ratio = mu < log_theta ? -std::log1p(lambda / theta) : log_theta - log_total;
      double d_theta = digamma_difference(y, theta) + log_ratio + (lambda - y) / total;
      return {value, d_mu, -2.0 * theta * d_theta};
    }
  }
  return {};
}

double log_likelihood(FamilyKind kind, double y, const FamilyParams& p) {
  require_params(kind, p);
  if (!in_support(kind, y))
    throw Error(ErrorCode::domain_error,
                "undefined likelihood: " + std::string(to_string(kind)) + " family does not support y = " +
                    std::to_string(y) + " (support: " + std::string(support_description(kind)) + ")",
                {{"family", std::string(to_string(kind))}, {"value", y}});
  double log_sigma = has_scale(kind) ? std::log(p.sigma) : 0.0;
  return log_likelihood_terms(kind, y, p.mu, log_sigma).value;
}

double sample_outcome(FamilyKind kind, const FamilyParams& p, Rng& rng) {
  require_params(kind, p);
  constexpr double kTiny = std::numeric_limits<double>::denorm_min();
  constexpr double kHuge = std::numeric_limits<double>::max();
  switch (kind) {
    case FamilyKind::normal: return std::normal_distribution<double>(p.mu, p.sigma)(rng);
    case FamilyKind::log_normal: {
      double z = std::normal_distribution<double>(p.mu, p.sigma)(rng);
      return std::clamp(std::exp(z), kTiny, kHuge);
    }
    case FamilyKind::logit_normal: {
      double z = std::normal_distribution<double>(p.mu, p.sigma)(rng);
      return std::clamp(inverse_logit(z), kTiny, std::nextafter(1.0, 0.0));
    }
    case FamilyKind::logistic: return std::bernoulli_distribution(inverse_logit(p.mu))(rng) ? 1.0 : 0.0;
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: {
      double rate = std::exp(p.mu);
      if (kind == FamilyKind::negative_binomial) {
        double theta = 1.0 / (p.sigma * p.sigma);
        rate = std::gamma_distribution<double>(theta, rate / theta)(rng);
      }
      if (!std::isfinite(rate)) throw Error(ErrorCode::domain_error, "count rate overflows", {{"mu", p.mu}});
      if (rate <= 0.0) return 0.0;
      // std::poisson_distribution overflows long long near here; the normal
      // approximation is exact to well below one count in relative terms.
      if (rate >= 1e15) {
        double z = std::normal_distribution<double>(rate, std::sqrt(rate))(rng);
        return std::min(std::floor(std::max(z, 0.0) + 0.5), kHuge);
      }
      return static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
    }
  }
  return 0.0;
}

double family_mean(FamilyKind kind, const FamilyParams& p) {
  switch (kind) {
    case FamilyKind::normal: return p.mu;
    case FamilyKind::log_normal: return std::exp(p.mu + 0.5 * p.sigma * p.sigma);
    case FamilyKind::logit_normal: {
      const auto& gh = gauss_hermite_256();
      double s = 0.0;
      for (std::size_t i = 0; i < gh.nodes.size(); ++i)
        s += gh.weights[i] * inverse_logit(p.mu + std::numbers::sqrt2 * p.sigma * gh.nodes[i]);
      return s / std::sqrt(std::numbers::pi);
    }
    case FamilyKind::logistic: return inverse_logit(p.mu);
    case FamilyKind::poisson:
    case FamilyKind::negative_binomial: return std::exp(p.mu);
  }
  return p.mu;
}

}  // namespace evm
