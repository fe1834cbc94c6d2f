#pragma once

// Reference implementations used only by tests. Everything here is written
// from textbook formulas, independently of the engine's own code paths.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline constexpr long double kPi = 3.141592653589793238462643383279502884L;

// Densities and mass functions evaluated directly (not in log space) in long
// double, then logged. Parameters: mu on the link scale, sigma the scale.
inline double normal_logpdf(double y, double mu, double sigma) {
  long double z = (static_cast<long double>(y) - mu) / sigma;
  long double pdf = std::exp(-0.5L * z * z) / (sigma * std::sqrt(2.0L * kPi));
  return static_cast<double>(std::log(pdf));
}

inline double log_normal_logpdf(double y, double mu, double sigma) {
  long double ly = std::log(static_cast<long double>(y));
  long double z = (ly - mu) / sigma;
  long double pdf = std::exp(-0.5L * z * z) / (y * sigma * std::sqrt(2.0L * kPi));
  return static_cast<double>(std::log(pdf));
}

inline double logit_normal_logpdf(double y, double mu, double sigma) {
  long double yy = y;
  long double lg = std::log(yy / (1.0L - yy));
  long double z = (lg - mu) / sigma;
  long double pdf = std::exp(-0.5L * z * z) / (sigma * std::sqrt(2.0L * kPi) * yy * (1.0L - yy));
  return static_cast<double>(std::log(pdf));
}

inline double bernoulli_logit_logpmf(double y, double mu) {
  long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(mu)));
  return static_cast<double>(std::log(y == 1.0 ? p : 1.0L - p));
}

inline double poisson_logpmf(double y, double mu) {
  long double lambda = std::exp(static_cast<long double>(mu));
  long double pmf = std::pow(lambda, static_cast<long double>(y)) * std::exp(-lambda) / std::tgamma(y + 1.0L);
  return static_cast<double>(std::log(pmf));
}

// NB2 with mean exp(mu) and size theta = 1 / sigma^2.
inline double negbin_logpmf(double y, double mu, double sigma) {
  long double theta = 1.0L / (static_cast<long double>(sigma) * sigma);
  long double lambda = std::exp(static_cast<long double>(mu));
  long double coef = std::tgamma(y + theta) / (std::tgamma(theta) * std::tgamma(y + 1.0L));
  long double pmf = coef * std::pow(theta / (theta + lambda), theta) *
                    std::pow(lambda / (theta + lambda), static_cast<long double>(y));
  return static_cast<double>(std::log(pmf));
}

inline double mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

// Maximum-likelihood standard deviation (divisor n).
inline double mle_sd(const std::vector<double>& v) {
  long double m = mean(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(s / v.size()));
}

inline double sample_sd(const std::vector<double>& v) {
  long double m = mean(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(s / (v.size() - 1)));
}

// Central difference of a scalar function.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// E[invlogit(mu + sigma Z)] by composite Simpson over z in [-12, 12].
inline double logit_normal_mean(double mu, double sigma) {
  const int n = 20000;
  const long double a = -12.0L, b = 12.0L, h = (b - a) / n;
  long double s = 0;
  for (int i = 0; i <= n; ++i) {
    long double z = a + i * h;
    long double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    long double phi = std::exp(-0.5L * z * z) / std::sqrt(2.0L * kPi);
    s += w * phi / (1.0L + std::exp(-(mu + sigma * z)));
  }
  return static_cast<double>(s * h / 3.0L);
}

// Builds CSV text from named numeric columns.
inline std::string to_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << "\n";
  for (std::size_t r = 0; r < columns.front().size(); ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j][r];
    out << "\n";
  }
  return out.str();
}

// Outcome simulation with std distributions only.
inline double simulate(const std::string& family, double mu, double sigma, std::mt19937_64& rng) {
  if (family == "normal") return std::normal_distribution<double>(mu, sigma)(rng);
  if (family == "log_normal") return std::exp(std::normal_distribution<double>(mu, sigma)(rng));
  if (family == "logit_normal") return 1.0 / (1.0 + std::exp(-std::normal_distribution<double>(mu, sigma)(rng)));
  if (family == "logistic") return std::bernoulli_distribution(1.0 / (1.0 + std::exp(-mu)))(rng) ? 1.0 : 0.0;
  if (family == "poisson") return static_cast<double>(std::poisson_distribution<int>(std::exp(mu))(rng));
  double theta = 1.0 / (sigma * sigma);
  double rate = std::gamma_distribution<double>(theta, std::exp(mu) / theta)(rng);
  return rate <= 0 ? 0.0 : static_cast<double>(std::poisson_distribution<int>(rate)(rng));
}

}  // namespace oracle
