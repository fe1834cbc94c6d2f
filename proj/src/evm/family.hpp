#pragma once

#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace evm {

enum class FamilyKind { normal, log_normal, logit_normal, logistic, poisson, negative_binomial };

inline constexpr FamilyKind kAllFamilies[] = {FamilyKind::normal,   FamilyKind::log_normal,
                                              FamilyKind::logit_normal, FamilyKind::logistic,
                                              FamilyKind::poisson,  FamilyKind::negative_binomial};

std::string_view to_string(FamilyKind kind);
FamilyKind parse_family(std::string_view text);

bool has_scale(FamilyKind kind);
bool is_count(FamilyKind kind);
bool in_support(FamilyKind kind, double y);
std::string_view support_description(FamilyKind kind);

// mu is the linear predictor (location on the link scale). sigma is the
// scale parameter, ignored by logistic and poisson.
struct FamilyParams {
  double mu = 0.0;
  double sigma = 1.0;
};

// Maps a data-scale location to the linear-predictor scale and back.
double location_link(FamilyKind kind, double mu_response);
double location_inverse_link(FamilyKind kind, double eta);

// Throws domain_error when y lies outside the family's support.
double log_likelihood(FamilyKind kind, double y, const FamilyParams& p);

// Log-likelihood with its derivatives with respect to mu and log(sigma).
// Callers must have checked the support; d_log_sigma is 0 for scale-free families.
struct LogLikTerms {
  double value = 0.0;
  double d_mu = 0.0;
  double d_log_sigma = 0.0;
};
LogLikTerms log_likelihood_terms(FamilyKind kind, double y, double mu, double log_sigma);

using Rng = std::mt19937_64;

double sample_outcome(FamilyKind kind, const FamilyParams& p, Rng& rng);

// E[y | mu, sigma] on the data scale.
double family_mean(FamilyKind kind, const FamilyParams& p);

double inverse_logit(double eta);
double logit(double p);
double digamma(double x);

}  // namespace evm
