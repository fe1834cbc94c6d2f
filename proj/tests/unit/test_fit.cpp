#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "evm/error.hpp"
#include "evm/fit.hpp"

using namespace evm;

namespace {

struct DesignOracleCase {
  const char* formula;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

#include "../fixtures/design_oracle.inc"

Dataset read_data(const std::string& file) {
  std::ifstream in(std::string(EVM_DATA_DIR) + "/" + file);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_csv(ss.str(), file);
}

Dataset numbers_csv(const std::vector<double>& y) { return load_csv(oracle::to_csv({"y"}, {y}), "y"); }

ErrorCode fit_error(const Dataset& d, const ModelSpec& s) {
  try {
    fit_model(d, s);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an engine error");
  return ErrorCode::internal;
}

}  // namespace

TEST_CASE("design matrices match the reference model matrices") {
  auto d = load_csv(kDesignOracleCsv, "oracle");
  for (const auto& c : kDesignOracleCases) {
    CAPTURE(c.formula);
    auto m = build_design_matrix(d, parse_formula(c.formula, true));
    REQUIRE(m.labels().size() == c.labels.size());
    for (std::size_t j = 0; j < c.labels.size(); ++j) {
      auto it = std::find(m.labels().begin(), m.labels().end(), c.labels[j]);
      REQUIRE_MESSAGE(it != m.labels().end(), c.labels[j]);
      auto col = static_cast<Eigen::Index>(it - m.labels().begin());
      for (std::size_t r = 0; r < c.rows.size(); ++r) CHECK(m.values(static_cast<Eigen::Index>(r), col) == c.rows[r][j]);
    }
  }
}

TEST_CASE("design matrix structure") {
  auto d = load_csv("y,a,b,cyl\n1,0.5,2,4\n2,1.5,3,6\n3,2.5,5,8\n4,3,7,4\n5,1,11,6\n", "t", LoadOptions{3});
  auto ones = build_design_matrix(d, parse_formula("y ~ 1", true));
  CHECK(ones.values.rows() == 5);
  CHECK(ones.values.cols() == 1);
  CHECK(ones.values.isOnes());

  auto cyl = build_design_matrix(d, parse_formula("y ~ cyl", true));
  CHECK(cyl.labels() == std::vector<std::string>{"(Intercept)", "cyl6", "cyl8"});
  CHECK(cyl.reference_levels() == std::vector<std::pair<std::string, std::string>>{{"cyl", "4"}});
  CHECK(cyl.values(1, 1) == 1.0);
  CHECK(cyl.values(2, 2) == 1.0);
  CHECK(cyl.values(0, 1) + cyl.values(0, 2) == 0.0);

  auto prod = build_design_matrix(d, parse_formula("y ~ a:b", true));
  CHECK(prod.labels() == std::vector<std::string>{"(Intercept)", "a:b"});
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(prod.values(r, 1) == d.column("a").number(r) * d.column("b").number(r));

  auto no_int = build_design_matrix(d, parse_formula("y ~ 0 + a", true));
  CHECK(no_int.labels() == std::vector<std::string>{"a"});
  CHECK(no_int.encoding.term_columns == std::vector<std::vector<std::size_t>>{{0}});
}

TEST_CASE("removing the intercept drops exactly one column for continuous terms") {
  auto d = load_csv("y,a,b\n1,0.5,2\n2,1.5,3\n3,2.5,5\n4,3,7\n5,-1,2\n6,0.25,-4\n", "t", LoadOptions{2});
  for (const char* rhs : {"a", "a + b", "a*b"}) {
    auto with = build_design_matrix(d, parse_formula(std::string("y ~ ") + rhs, true));
    auto without = build_design_matrix(d, parse_formula(std::string("y ~ 0 + ") + rhs, true));
    CHECK(with.values.cols() == without.values.cols() + 1);
  }
}

TEST_CASE("main effects with an intercept contribute k-1 columns") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t k = 2 + rng() % 5;
    std::string csv = "y,g\n";
    for (std::size_t r = 0; r < 3 * k; ++r) csv += "1,L" + std::to_string(r % k) + "\n";
    auto m = build_design_matrix(load_csv(csv, "t"), parse_formula("y ~ g", true));
    CHECK(static_cast<std::size_t>(m.values.cols()) == k);
  }
}

TEST_CASE("design matrix errors") {
  auto d = load_csv("y,g,x\n1,a,1\n2,a,2\n3,a,3\n", "t");
  try {
    build_design_matrix(d, parse_formula("y ~ g", true));
    FAIL("single-level predictor");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::domain_error);
    CHECK(std::string(e.what()).find("no contrast possible") != std::string::npos);
  }
  auto empty = d.select_rows(std::vector<std::size_t>{});
  CHECK_THROWS_AS(build_design_matrix(empty, parse_formula("y ~ x", true)), Error);

  auto aliased = load_csv("y,a,b\n1,1,2\n2,2,4\n3,3,6\n4,5,10\n", "t", LoadOptions{2});
  try {
    build_design_matrix(aliased, parse_formula("y ~ a + b", true));
    FAIL("collinear columns");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::domain_error);
    CHECK(e.detail().at("columns") == nlohmann::json::array({"b"}));
  }
}

TEST_CASE("apply_encoding reproduces the fitted encoding on new rows") {
  auto d = load_csv("y,g,x\n1,a,1\n2,b,2\n3,c,3\n4,a,5\n5,b,-1\n6,c,7\n", "t", LoadOptions{2});
  auto m = build_design_matrix(d, parse_formula("y ~ g*x", true));
  auto subset = d.select_rows(std::vector<std::size_t>{3, 1});
  auto x = apply_encoding(subset, m.encoding);
  CHECK(x.row(0) == m.values.row(3));
  CHECK(x.row(1) == m.values.row(1));
  auto unseen = load_csv("y,g,x\n1,z,1\n", "t", LoadOptions{0});
  CHECK_THROWS_AS(apply_encoding(unseen, m.encoding), Error);
}

TEST_CASE("normal intercept-only fit matches the closed form") {
  auto m = fit_model(numbers_csv({1, 2, 3}), make_model_spec(FamilyKind::normal, "y ~ 1"));
  REQUIRE(m.converged);
  CHECK(m.beta(0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::exp(m.beta(1)) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-9));
  double ll = 0;
  for (double y : {1.0, 2.0, 3.0}) ll += oracle::normal_logpdf(y, 2.0, std::sqrt(2.0 / 3.0));
  CHECK(m.log_lik == doctest::Approx(ll).epsilon(1e-10));

  auto table = coefficient_table(m);
  REQUIRE(table.size() == 2);
  CHECK(table[0].submodel == "location");
  CHECK(table[0].label == "(Intercept)");
  CHECK(table[0].estimate == doctest::Approx(2.0));
  CHECK(table[0].std_error == doctest::Approx(std::sqrt(2.0 / 3.0) / std::sqrt(3.0)).epsilon(1e-5));
  CHECK(table[1].submodel == "scale");
}

TEST_CASE("poisson intercept-only fit matches the closed form") {
  auto m = fit_model(numbers_csv({2, 4}), make_model_spec(FamilyKind::poisson, "y ~ 1"));
  REQUIRE(m.converged);
  CHECK(m.beta(0) == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(m.beta.size() == 1);
}

TEST_CASE("constant outcome is a degenerate scale") {
  auto m = fit_model(numbers_csv({5, 5, 5}), make_model_spec(FamilyKind::normal, "y ~ 1"));
  CHECK_FALSE(m.converged);
  CHECK(m.diagnostic.find("degenerate scale") != std::string::npos);
  try {
    coefficient_table(m);
    FAIL("non-converged");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::fit_not_converged);
    CHECK(std::string(e.what()) == "model did not converge");
  }
}

TEST_CASE("separated logistic data does not converge") {
  auto d = load_csv("y,x\n0,1\n0,2\n0,3\n1,4\n1,5\n1,6\n", "sep");
  auto m = fit_model(d, make_model_spec(FamilyKind::logistic, "y ~ x"));
  CHECK_FALSE(m.converged);
  CHECK(m.diagnostic.find("separation") != std::string::npos);
}

TEST_CASE("negative binomial on underdispersed counts reports the poisson limit") {
  std::string csv = "y\n";
  for (int i = 0; i < 60; ++i) csv += std::to_string(3 + i % 3) + "\n";  // variance below the mean
  auto m = fit_model(load_csv(csv, "under", LoadOptions{0}), make_model_spec(FamilyKind::negative_binomial, "y ~ 1"));
  CHECK_FALSE(m.converged);
  CHECK(m.diagnostic.find("poisson") != std::string::npos);
  CHECK(std::exp(m.beta(0)) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("text binary outcome for logistic") {
  auto d = load_csv("pass,x\nno,1\nyes,2\nno,3\nyes,4\nyes,2.5\nno,2.2\n", "t", LoadOptions{2});
  auto m = fit_model(d, make_model_spec(FamilyKind::logistic, "pass ~ x"));
  CHECK_MESSAGE(m.converged, m.diagnostic);
  CHECK(m.outcome_levels == std::vector<std::string>{"no", "yes"});
  CHECK(fit_error(d, make_model_spec(FamilyKind::normal, "pass ~ x")) == ErrorCode::domain_error);
}

TEST_CASE("outcomes outside the support are rejected with their rows") {
  auto d = load_csv("y\n1\n0\n2.5\n", "t");
  try {
    fit_model(d, make_model_spec(FamilyKind::poisson, "y ~ 1"));
    FAIL("2.5 is not a count");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::domain_error);
    CHECK(e.detail().at("rows") == nlohmann::json::array({2}));
  }
  try {
    fit_model(d, make_model_spec(FamilyKind::log_normal, "y ~ 1"));
    FAIL("0 is outside (0, inf)");
  } catch (const Error& e) {
    CHECK(e.detail().at("rows") == nlohmann::json::array({1}));
  }
}

TEST_CASE("rows with missing referenced values are dropped and counted") {
  auto d = load_csv("y,x,unused\n1,1,NA\n2,NA,1\n3,3,1\n5,4,1\n4,6,\n", "t");
  auto m = fit_model(d, make_model_spec(FamilyKind::normal, "y ~ x"));
  CHECK(m.n_obs == 4);
  CHECK(m.n_dropped == 1);
  auto empty = load_csv("y,x\n1,NA\nNA,2\n", "t");
  CHECK(fit_error(empty, make_model_spec(FamilyKind::normal, "y ~ x")) == ErrorCode::domain_error);
}

TEST_CASE("spec errors surface from fit_model") {
  auto d = numbers_csv({1, 2, 3});
  CHECK(fit_error(d, make_model_spec(FamilyKind::normal, "y ~ ghost")) == ErrorCode::unknown_variable);
  CHECK(fit_error(d, make_model_spec(FamilyKind::poisson, "y ~ 1", "~ 1")) == ErrorCode::unsupported);
}

TEST_CASE("joint log-likelihood gradient matches central differences") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> z;
  for (auto k : kAllFamilies) {
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 30;
      Eigen::MatrixXd xl(n, 3), xs(n, 2);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        xl.row(i) << 1, z(rng), z(rng);
        xs.row(i) << 1, z(rng);
        double mu = 0.3 * z(rng);
        y(i) = oracle::simulate(std::string(to_string(k)), mu, 0.8, rng);
        if (k == FamilyKind::logit_normal) y(i) = std::clamp(y(i), 1e-6, 1 - 1e-6);
        if (k == FamilyKind::log_normal) y(i) = std::max(y(i), 1e-12);
      }
      std::optional<Eigen::MatrixXd> scale;
      if (has_scale(k)) scale = xs;
      LogLikelihood ll(k, y, xl, scale);
      Eigen::VectorXd beta(ll.n_parameters());
      for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = 0.4 * z(rng);
      Eigen::VectorXd grad;
      ll.value(beta, grad);
      for (Eigen::Index j = 0; j < beta.size(); ++j) {
        double h = 1e-6 * (1 + std::abs(beta(j)));
        Eigen::VectorXd up = beta, dn = beta;
        up(j) += h;
        dn(j) -= h;
        double fd = (ll.value(up) - ll.value(dn)) / (2 * h);
        CHECK_MESSAGE(std::abs(grad(j) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)), to_string(k) << " j=" << j);
      }
    }
  }
}

TEST_CASE("normal fits are location-shift equivariant") {
  std::mt19937_64 rng(47);
  std::normal_distribution<double> z;
  std::vector<double> y, x, shifted;
  for (int i = 0; i < 200; ++i) {
    x.push_back(z(rng));
    y.push_back(1 + 2 * x.back() + std::exp(0.3 * x.back()) * z(rng));
    shifted.push_back(y.back() + 7.5);
  }
  auto spec = make_model_spec(FamilyKind::normal, "y ~ x", "~ x");
  auto a = fit_model(load_csv(oracle::to_csv({"y", "x"}, {y, x}), "a"), spec);
  auto b = fit_model(load_csv(oracle::to_csv({"y", "x"}, {shifted, x}), "b"), spec);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(b.beta(0) - a.beta(0) == doctest::Approx(7.5).epsilon(1e-8));
  CHECK(std::abs(b.beta(1) - a.beta(1)) < 1e-8);
  CHECK(std::abs(b.beta(2) - a.beta(2)) < 1e-8);
  CHECK(std::abs(b.beta(3) - a.beta(3)) < 1e-8);
}

TEST_CASE("covariance is symmetric and fits are deterministic") {
  auto d = read_data("absences.csv");
  auto spec = make_model_spec(FamilyKind::negative_binomial, "absences ~ g_edu + study_time");
  auto a = fit_model(d, spec);
  auto b = fit_model(d, spec);
  REQUIRE(a.converged);
  CHECK(a.covariance.rows() == a.beta.size());
  CHECK((a.covariance - a.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(a.beta == b.beta);
  CHECK(a.log_lik == b.log_lik);
  CHECK(a.gradient_norm <= 1e-6);
  auto table = coefficient_table(a);
  CHECK(table.size() == static_cast<std::size_t>(a.beta.size()));
}

TEST_CASE("negative binomial fit agrees with an independent GLM implementation") {
  // Reference values from statsmodels' NegativeBinomial (NB2) on data/absences.csv,
  // converted from alpha to log(sigma) = log(alpha) / 2.
  auto d = read_data("absences.csv");
  auto two = fit_model(d, make_model_spec(FamilyKind::negative_binomial, "absences ~ g_edu + study_time"));
  const double want_two[] = {1.1376429356177702, 0.8212728473674752, 0.4241244506902844, 0.27491416983759037,
                             -0.04118871294925546, -0.22826815593866334};
  REQUIRE(two.converged);
  for (int j = 0; j < 6; ++j) CHECK(two.beta(j) == doctest::Approx(want_two[j]).epsilon(1e-5));
  CHECK(two.log_lik == doctest::Approx(-1215.7691776852273).epsilon(1e-9));

  auto one = fit_model(d, make_model_spec(FamilyKind::negative_binomial, "absences ~ g_edu"));
  const double want_one[] = {0.8493079113152279, 0.9752413807358181, 0.5369864498046627, 0.3408443373920758,
                             -0.2195202362317956};
  REQUIRE(one.converged);
  for (int j = 0; j < 5; ++j) CHECK(one.beta(j) == doctest::Approx(want_one[j]).epsilon(1e-5));
  CHECK(one.log_lik == doctest::Approx(-1218.461022143404).epsilon(1e-9));
}

TEST_CASE("adding a term never lowers the maximized log-likelihood") {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> z;
  for (auto k : kAllFamilies) {
    std::vector<double> y, a, b;
    for (int i = 0; i < 300; ++i) {
      a.push_back(z(rng));
      b.push_back(z(rng));
      y.push_back(oracle::simulate(std::string(to_string(k)), 0.2 + 0.5 * a.back(), 0.7, rng));
    }
    auto d = load_csv(oracle::to_csv({"y", "a", "b"}, {y, a, b}), "n");
    auto small = fit_model(d, make_model_spec(k, "y ~ a"));
    auto big = fit_model(d, make_model_spec(k, "y ~ a + b"));
    REQUIRE(small.converged);
    REQUIRE(big.converged);
    CHECK_MESSAGE(big.log_lik >= small.log_lik - 1e-6, to_string(k));
  }
}
