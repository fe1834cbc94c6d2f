#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "evm/chart.hpp"
#include "evm/error.hpp"
#include "evm/serialize.hpp"

using namespace evm;

namespace {

Dataset sample_data() {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> z;
  std::string csv = "absences,study_time,g_edu,sex,cls\n";
  const char* edu[] = {"none", "primary", "secondary", "higher"};
  for (int i = 0; i < 120; ++i) {
    double st = std::abs(3 + 2 * z(rng));
    int a = std::poisson_distribution<int>(std::exp(1.2 - 0.1 * st))(rng);
    csv += std::to_string(a) + "," + format_number(st) + "," + edu[rng() % 4] + "," + (rng() % 2 ? "F" : "M") + "," +
           std::to_string(rng() % 3) + "\n";
  }
  return load_csv(csv, "abs", LoadOptions{3});
}

ChartSpec spec(std::optional<std::string> x, std::optional<std::string> y) {
  ChartSpec s;
  s.x = std::move(x);
  s.y = std::move(y);
  return s;
}

}  // namespace

TEST_CASE("default chart kinds") {
  using K = ColumnKind;
  CHECK(default_chart(K::continuous, K::continuous) == ChartKind::scatter);
  CHECK(default_chart(K::discrete, std::nullopt) == ChartKind::bar);
  CHECK(default_chart(std::nullopt, K::discrete) == ChartKind::bar);
  CHECK(default_chart(K::continuous, std::nullopt) == ChartKind::strip);
  CHECK(default_chart(K::discrete, K::discrete) == ChartKind::heatmap);
  CHECK(default_chart(K::continuous, K::discrete) == ChartKind::strip);
  CHECK(default_chart(K::discrete, K::continuous) == ChartKind::strip);
  CHECK_THROWS_AS(default_chart(std::nullopt, std::nullopt), Error);
}

TEST_CASE("facet grids") {
  auto d = sample_data();
  ChartSpec s = spec("study_time", "absences");
  auto single = facet_grid(s, d);
  CHECK(single.cells.size() == 1);
  CHECK(single.cells[0].rows.size() == d.n_rows());

  s.row = "g_edu";
  auto rows = facet_grid(s, d);
  CHECK(rows.n_rows() == 4);
  CHECK(rows.n_columns() == 1);
  CHECK(rows.row_levels == std::vector<std::string>{"higher", "none", "primary", "secondary"});

  s.column = "cls";
  s.row = "sex";
  auto grid = facet_grid(s, d);
  CHECK(grid.cells.size() == 6);
  CHECK(grid.cells[1].row_level == "F");
  CHECK(grid.cells[1].column_level == "1");
  CHECK(grid.cells[3].row_level == "M");
  std::size_t total = 0;
  for (const auto& c : grid.cells) total += c.rows.size();
  CHECK(total == d.n_rows());

  s.row = "study_time";
  CHECK_THROWS_AS(facet_grid(s, d), Error);
}

TEST_CASE("missing facet values get their own level") {
  auto d = load_csv("y,g\n1,a\n2,\n3,b\n", "t");
  ChartSpec s = spec("y", std::nullopt);
  s.row = "g";
  auto grid = facet_grid(s, d);
  CHECK(grid.row_levels == std::vector<std::string>{"a", "b", "NA"});
  CHECK(grid.cells[2].rows == std::vector<std::size_t>{1});
}

TEST_CASE("model checks share the outcome axis") {
  auto d = sample_data();
  auto m1 = fit_model(d, make_model_spec(FamilyKind::poisson, "absences ~ g_edu", "", "edu"));
  auto m2 = fit_model(d, make_model_spec(FamilyKind::negative_binomial, "absences ~ g_edu + study_time", "", "both"));
  auto table = assemble_check(d, {m1, m2}, 20, 5);
  auto layout = compose_check(spec("study_time", "absences"), table);
  REQUIRE(layout.panels.size() == 3);
  CHECK(layout.panels[0].source == kObservedSource);
  CHECK(layout.panels[1].source == "edu");
  CHECK(layout.panels[2].source == "both");
  CHECK(layout.panels[1].frames == 20);
  CHECK(layout.panels[0].frames == 0);
  CHECK(layout.kind == ChartKind::scatter);
  REQUIRE(layout.y);
  CHECK(layout.y->outcome);

  double hi = 0;
  for (const auto& b : table.blocks)
    for (double v : b.outcome) hi = std::max(hi, v);
  CHECK(layout.y->max >= hi);

  auto j = to_json(layout);
  for (const auto& p : j["panels"]) CHECK(p["scales"] == j["scales"]);
  CHECK(j["table"]["records"] == table.record_count());
  CHECK(j["panels"][1]["animation"]["field"] == "draw");
}

TEST_CASE("composition without models is the plain chart") {
  auto d = sample_data();
  for (auto s : {spec("study_time", "absences"), spec("g_edu", std::nullopt), spec("g_edu", "sex")}) {
    auto composed = compose_check(s, assemble_check(d, {}, 10, 1));
    CHECK(to_json(composed) == to_json(plain_chart(s, d)));
    CHECK(composed.panels.size() == 1);
  }
  CHECK(plain_chart(spec("g_edu", std::nullopt), d).kind == ChartKind::bar);
  CHECK(plain_chart(spec("g_edu", "sex"), d).kind == ChartKind::heatmap);
}

TEST_CASE("residual view") {
  auto d = sample_data();
  auto m = fit_model(d, make_model_spec(FamilyKind::poisson, "absences ~ g_edu", "", "edu"));
  auto table = assemble_check(d, {m}, 5, 2);
  ChartSpec s = spec("study_time", "absences");
  s.show_residuals = true;
  auto layout = compose_check(s, table);
  CHECK(layout.residual_view);
  REQUIRE(layout.y);
  CHECK(layout.y->field == "residual");
  CHECK(layout.y->min <= 0.0);
  CHECK(layout.y->max >= 0.0);
  auto j = to_json(layout);
  CHECK(j["reference_line"]["value"] == 0.0);
  CHECK(j["reference_line"]["axis"] == "y");

  // observed residuals per model, matching residuals() and inside the domain
  auto r = residuals(m, d);
  REQUIRE(layout.panels.size() == 2);
  for (const auto& p : layout.panels) {
    REQUIRE(p.residuals.size() == 1);
    CHECK(p.residuals[0].model == "edu");
    REQUIRE(p.residuals[0].values.size() == r.residual.size());
    for (std::size_t i = 0; i < r.residual.size(); ++i) {
      CHECK(p.residuals[0].values[i] == doctest::Approx(r.residual[i]).epsilon(1e-12));
      CHECK(p.residuals[0].values[i] >= layout.y->min);
      CHECK(p.residuals[0].values[i] <= layout.y->max);
    }
  }
  CHECK(j["panels"][0]["residual_series"][0]["model"] == "edu");
  CHECK_FALSE(to_json(compose_check(spec("study_time", "absences"), table))["panels"][0].contains("residual_series"));

  auto records = predictive_table_json(table, true)["records"];
  CHECK(records[0]["residual"].is_null());
  const auto& first_draw = records[table.n_obs()];
  CHECK(first_draw["residual"].get<double>() ==
        doctest::Approx(first_draw["absences"].get<double>() - r.fitted[0]).epsilon(1e-12));
  CHECK_FALSE(predictive_table_json(table)["records"][0].contains("residual"));
  auto csv = predictive_table_csv(table, true);
  CHECK(csv.substr(0, csv.find('\n')).ends_with(",absences,residual"));

  ChartSpec wrong = spec("study_time", "g_edu");
  wrong.show_residuals = true;
  CHECK_THROWS_AS(compose_check(wrong, table), Error);
}

TEST_CASE("unknown chart fields") {
  auto d = sample_data();
  try {
    plain_chart(spec("ghost", std::nullopt), d);
    FAIL("unknown field");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_variable);
  }
}

TEST_CASE("chart spec JSON round trip") {
  ChartSpec s = spec("a", std::nullopt);
  s.row = "r";
  s.show_residuals = true;
  auto back = chart_spec_from_json(to_json(s));
  CHECK(back.x == s.x);
  CHECK_FALSE(back.y);
  CHECK(back.row == s.row);
  CHECK(back.show_residuals);
}
