#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "../oracles.hpp"
#include "evm/error.hpp"
#include "evm/predict.hpp"

using namespace evm;

namespace {

Dataset numbers_csv(const std::vector<double>& y) { return load_csv(oracle::to_csv({"y"}, {y}), "y"); }

Dataset simulated(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> y, x, c, g;
  for (std::size_t i = 0; i < n; ++i) {
    x.push_back(z(rng));
    g.push_back(static_cast<double>(rng() % 3));
    y.push_back(1 + 0.5 * x.back() + 0.3 * g.back() + z(rng));
    c.push_back(static_cast<double>(std::poisson_distribution<int>(std::exp(0.5 + 0.3 * x.back()))(rng)));
  }
  return load_csv(oracle::to_csv({"y", "x", "g", "c"}, {y, x, g, c}), "sim");
}

}  // namespace

TEST_CASE("zero covariance draws reproduce the estimate") {
  auto m = fit_model(numbers_csv({1, 2, 3}), make_model_spec(FamilyKind::normal, "y ~ 1"));
  m.covariance.setZero();
  for (const auto& d : draw_parameters(m, 20, 5)) CHECK(d.beta == m.beta);
}

TEST_CASE("one-dimensional draws have the requested spread") {
  auto m = fit_model(numbers_csv({2, 4}), make_model_spec(FamilyKind::poisson, "y ~ 1"));
  m.beta(0) = 2.0;
  m.covariance(0, 0) = 0.25;
  auto draws = draw_parameters(m, 10000, 99);
  std::vector<double> v;
  for (const auto& d : draws) v.push_back(d.beta(0));
  CHECK(std::abs(oracle::sample_sd(v) - 0.5) < 0.02);
  CHECK(std::abs(oracle::mean(v) - 2.0) < 3 * 0.5 / 100);
}

TEST_CASE("draws are deterministic and validated") {
  auto m = fit_model(simulated(1, 100), make_model_spec(FamilyKind::normal, "y ~ x"));
  auto a = draw_parameters(m, 30, 7);
  auto b = draw_parameters(m, 30, 7);
  REQUIRE(a.size() == 30);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].draw_index == k);
    CHECK(a[k].beta == b[k].beta);
    CHECK(a[k].beta.size() == m.beta.size());
  }
  CHECK(draw_parameters(m, 30, 8)[0].beta != a[0].beta);
  CHECK_THROWS_AS(draw_parameters(m, 0, 7), Error);

  auto bad = fit_model(numbers_csv({5, 5, 5}), make_model_spec(FamilyKind::normal, "y ~ 1"));
  try {
    draw_parameters(bad, 10, 1);
    FAIL("non-converged model");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::fit_not_converged);
  }
}

TEST_CASE("empirical draw covariance matches the model covariance") {
  auto m = fit_model(simulated(2, 400), make_model_spec(FamilyKind::normal, "y ~ x + g"));
  auto draws = draw_parameters(m, 20000, 3);
  const auto p = m.beta.size();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const auto& d : draws) s += (d.beta - m.beta) * (d.beta - m.beta).transpose();
  s /= static_cast<double>(draws.size());
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      double scale = std::sqrt(m.covariance(i, i) * m.covariance(j, j));
      CHECK(std::abs(s(i, j) - m.covariance(i, j)) < 0.05 * scale);
    }
}

TEST_CASE("degenerate predictive distribution collapses onto the fitted mean") {
  auto m = fit_model(numbers_csv({1, 2, 3}), make_model_spec(FamilyKind::normal, "y ~ 1"));
  m.beta(1) = std::log(1e-12);
  m.covariance.setZero();
  auto out = predictive_dataset(m, numbers_csv({1, 2, 3}), {0, m.beta}, 3);
  for (double v : out.outcome) CHECK(v == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("predictions carry the data through in data units") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::vector<double> y, x;
  for (int i = 0; i < 200; ++i) {
    x.push_back(z(rng));
    y.push_back(std::exp(0.2 + 0.4 * x.back() + 0.5 * z(rng)));
  }
  auto d = load_csv(oracle::to_csv({"y", "x"}, {y, x}), "ln");
  auto m = fit_model(d, make_model_spec(FamilyKind::log_normal, "y ~ x"));
  REQUIRE(m.converged);
  for (const auto& draw : draw_parameters(m, 50, 11))
    for (double v : predictive_dataset(m, d, draw, draw.draw_index).outcome) CHECK(v > 0.0);

  auto missing = load_csv("y\n1\n2\n", "t");
  CHECK_THROWS_AS(predictive_dataset(m, missing, {0, m.beta}, 1), Error);
}

TEST_CASE("residuals") {
  auto n = residuals(fit_model(numbers_csv({1, 2, 3}), make_model_spec(FamilyKind::normal, "y ~ 1")),
                     numbers_csv({1, 2, 3}));
  REQUIRE(n.residual.size() == 3);
  CHECK(n.residual[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::abs(n.residual[1]) < 1e-9);
  CHECK(n.residual[2] == doctest::Approx(1.0).epsilon(1e-9));

  auto p = residuals(fit_model(numbers_csv({2, 4}), make_model_spec(FamilyKind::poisson, "y ~ 1")), numbers_csv({2, 4}));
  CHECK(p.residual[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(p.residual[1] == doctest::Approx(1.0).epsilon(1e-9));

  auto d = simulated(9, 300);
  auto m = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x + g"));
  auto r = residuals(m, d);
  CHECK(std::abs(std::accumulate(r.residual.begin(), r.residual.end(), 0.0)) < 1e-6);

  // with a modeled scale the normal equations weight residuals by 1 / sigma^2
  auto hm = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x + g", "~ x"));
  auto hr = residuals(hm, d);
  auto lp = linear_predictors(hm, d, hm.beta);
  double weighted = 0;
  for (std::size_t i = 0; i < hr.residual.size(); ++i) weighted += hr.residual[i] / (lp.sigma(i) * lp.sigma(i));
  CHECK(std::abs(weighted) / hr.residual.size() < 1e-6);  // the convergence tolerance on the mean score
}

TEST_CASE("perfect fit gives zero residuals") {
  auto d = load_csv("y,x\n1,0\n3,1\n5,2\n7,3\n", "t", LoadOptions{0});
  auto m = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x"));
  CHECK_FALSE(m.converged);  // sigma collapses, but the location is exact
  m.converged = true;
  for (double v : residuals(m, d).residual) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("logit-normal residuals use the integrated mean") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z;
  std::vector<double> y;
  for (int i = 0; i < 150; ++i) y.push_back(1 / (1 + std::exp(-(0.4 + 1.1 * z(rng)))));
  auto d = numbers_csv(y);
  auto m = fit_model(d, make_model_spec(FamilyKind::logit_normal, "y ~ 1"));
  auto r = residuals(m, d);
  double mean = oracle::logit_normal_mean(m.beta(0), std::exp(m.beta(1)));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(r.fitted[i] == doctest::Approx(mean).epsilon(1e-9));
}

TEST_CASE("assemble_check row counts and keys") {
  auto d = simulated(17, 517);
  auto m1 = fit_model(d, make_model_spec(FamilyKind::poisson, "c ~ 1", "", "null"));
  auto m2 = fit_model(d, make_model_spec(FamilyKind::poisson, "c ~ x", "", "effect"));
  auto t = assemble_check(d, {m1, m2}, 50, 123);
  CHECK(t.n_obs() == 517);
  CHECK(t.record_count() == 517u * (1 + 2 * 50));
  std::set<std::tuple<std::string, long, std::size_t>> keys;
  for (std::size_t i = 0; i < t.n_obs(); ++i) keys.insert({kObservedSource, -1, t.rows[i]});
  for (const auto& b : t.blocks) {
    CHECK(b.outcome.size() == t.n_obs());
    for (std::size_t i = 0; i < t.n_obs(); ++i) keys.insert({b.source, static_cast<long>(b.draw_index), t.rows[i]});
  }
  CHECK(keys.size() == t.record_count());

  auto observed_only = assemble_check(d, {}, 50, 123);
  CHECK(observed_only.blocks.empty());
  CHECK(observed_only.record_count() == d.n_rows());
}

TEST_CASE("assemble_check is reproducible and models do not perturb each other") {
  auto d = simulated(19, 120);
  auto a = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x", "", "a"));
  auto b = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ g", "", "b"));
  auto c = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x + g", "", "c"));
  auto two = assemble_check(d, {a, b}, 10, 42);
  auto again = assemble_check(d, {a, b}, 10, 42);
  auto three = assemble_check(d, {a, b, c}, 10, 42);
  auto reordered = assemble_check(d, {c, b, a}, 10, 42);
  for (std::size_t k = 0; k < two.blocks.size(); ++k) {
    CHECK(two.blocks[k].outcome == again.blocks[k].outcome);
    CHECK(two.blocks[k].outcome == three.blocks[k].outcome);
  }
  for (const auto& blk : two.blocks) {
    auto it = std::find_if(reordered.blocks.begin(), reordered.blocks.end(), [&](const PredictedBlock& o) {
      return o.source == blk.source && o.draw_index == blk.draw_index;
    });
    REQUIRE(it != reordered.blocks.end());
    CHECK(it->outcome == blk.outcome);
  }
}

TEST_CASE("assemble_check validation") {
  auto d = simulated(23, 60);
  auto a = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x", "", "same"));
  auto b = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ g", "", "same"));
  CHECK_THROWS_AS(assemble_check(d, {a, b}, 5, 1), Error);
  auto obs = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ g", "", kObservedSource));
  CHECK_THROWS_AS(assemble_check(d, {obs}, 5, 1), Error);
  auto other = fit_model(d, make_model_spec(FamilyKind::poisson, "c ~ x", "", "counts"));
  CHECK_THROWS_AS(assemble_check(d, {a, other}, 5, 1), Error);
}

TEST_CASE("assemble_check drops incomplete rows and keeps unmodeled columns") {
  auto d = load_csv("y,x,z\n1,0.5,a\n2,NA,b\n3,1.5,c\n2.5,2.25,NA\n4,3.5,a\n", "t", LoadOptions{0});
  auto m = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x"));
  auto t = assemble_check(d, {m}, 3, 1);
  CHECK(t.dropped == 1);
  CHECK(t.rows == std::vector<std::size_t>{0, 2, 3, 4});
  CHECK(t.observed.has_column("z"));
}

TEST_CASE("non-converged models still produce blocks") {
  auto d = load_csv("y,x\n0,1\n0,2\n0,3\n1,4\n1,5\n1,6\n", "sep", LoadOptions{0});
  auto m = fit_model(d, make_model_spec(FamilyKind::logistic, "y ~ x"));
  REQUIRE_FALSE(m.converged);
  auto t = assemble_check(d, {m}, 4, 1);
  CHECK(t.blocks.size() == 4);
  CHECK_FALSE(t.models[0].converged);
  for (const auto& b : t.blocks)
    for (double v : b.outcome) CHECK((v == 0.0 || v == 1.0));
}
