#include "harmitr/error.hpp"
#include "harmitr/tabular_io.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace harmitr;

TEST_CASE("load_observations parses a small file") {
  const auto p = test::write_tmp("three.csv", "x1,a,y\n0.5,1,0\n-1.25,0,1\n2,1,1\n");
  const auto t = load_observations(p);
  CHECK(t.n_rows() == 3);
  CHECK(t.dim() == 1);
  CHECK(t.covariates(1, 0) == -1.25);
  CHECK(t.treatment == std::vector<int>{1, 0, 1});
  CHECK(t.outcome == std::vector<int>{0, 1, 1});
  CHECK_FALSE(t.has_potential_outcomes());
}

TEST_CASE("load_observations honours a schema mapping") {
  const auto p = test::write_tmp("schema.csv", "age,treated,survived\n61,1,1\n47,0,0\n");
  ColumnSchema schema;
  schema.outcome = "survived";
  schema.treatment = "treated";
  schema.covariates = {"age"};
  const auto t = load_observations(p, schema);
  CHECK(t.dim() == 1);
  CHECK(t.covariates(0, 0) == 61.0);
}

TEST_CASE("non-binary outcome names its row") {
  const auto p = test::write_tmp("bad_y.csv",
                                 "x1,a,y\n0,1,0\n0,0,1\n0,1,1\n0,0,0\n0,1,2\n0,0,1\n");
  try {
    load_observations(p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.row() == 5);
    CHECK(std::string(e.what()).find("row 5") != std::string::npos);
  }
}

TEST_CASE("potential outcomes must agree with the observed outcome") {
  const auto p = test::write_tmp("sutva.csv", "x1,a,y,y0,y1\n0,0,1,1,0\n0,1,0,0,1\n");
  try {
    load_observations(p);
    FAIL("expected a consistency error");
  } catch (const ConsistencyError& e) {
    CHECK(e.row() == 2);
  }
}

TEST_CASE("schema and parse failures") {
  CHECK_THROWS_AS(load_observations(test::write_tmp("nox.csv", "a,y\n1,0\n")), SchemaError);
  CHECK_THROWS_AS(load_observations(test::write_tmp("noy.csv", "x1,a\n1,0\n")), SchemaError);
  CHECK_THROWS_AS(load_observations(test::write_tmp("dup.csv", "x1,x1,a,y\n1,2,0,1\n")),
                  SchemaError);
  CHECK_THROWS_AS(load_observations(test::write_tmp("half.csv", "x1,a,y,y0\n1,0,1,1\n")),
                  SchemaError);
  try {
    load_observations(test::write_tmp("text.csv", "x1,x2,a,y\n1,2,0,1\n3,abc,1,1\n"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == "x2");
  }
  CHECK_THROWS_AS(load_observations(test::write_tmp("missing.csv", "x1,a,y\n,0,1\n")),
                  ParseError);
  CHECK_THROWS_AS(load_observations(test::write_tmp("missing_y.csv", "x1,a,y\n1,0,\n")),
                  ValidationError);
  CHECK_THROWS_AS(load_observations(test::tmp_dir() / "does_not_exist.csv"), IoError);
}

TEST_CASE("write then load round-trips tables exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    ObservationTable t;
    const int n = 1 + static_cast<int>(rng.below(40));
    const int d = 1 + static_cast<int>(rng.below(4));
    t.covariates.resize(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) t.covariates(i, j) = round12(rng.normal() * std::pow(10.0, static_cast<double>(rng.below(7)) - 3.0));
    PotentialOutcomes po;
    for (int i = 0; i < n; ++i) {
      t.treatment.push_back(static_cast<int>(rng.below(2)));
      po.y0.push_back(static_cast<int>(rng.below(2)));
      po.y1.push_back(static_cast<int>(rng.below(2)));
      t.outcome.push_back(t.treatment.back() ? po.y1.back() : po.y0.back());
    }
    if (trial % 2) t.potential_outcomes = po;
    const auto p = test::tmp_dir() / "roundtrip.csv";
    write_observations(t, p);
    const auto back = load_observations(p);
    CHECK(back.covariates == t.covariates);
    CHECK(back.treatment == t.treatment);
    CHECK(back.outcome == t.outcome);
    CHECK(back.has_potential_outcomes() == t.has_potential_outcomes());
  }
}

TEST_CASE("decision columns round-trip") {
  const Decisions d{1, 0, 0, 1, 1};
  const auto p = test::tmp_dir() / "decisions.csv";
  write_decisions(d, p);
  CHECK(test::read_file(p) == "decision\n1\n0\n0\n1\n1\n");
  CHECK(load_decisions(p) == d);
}

TEST_CASE("reports serialize deterministically") {
  EvaluationReport r;
  r.method = "pessimistic";
  r.lambda = 0.05;
  r.reward_model = 0.123456789012345;
  r.thr1 = 0.05;
  r.thr2 = 0.04;
  r.thr3 = 0.03;
  r.proportion_treated = 0.5;
  r.beta_hat = {1.5, 2.25};

  const auto a = test::tmp_dir() / "report_a.json";
  const auto b = test::tmp_dir() / "report_b.json";
  write_report(r, a, ReportFormat::json);
  write_report(r, b, ReportFormat::json);
  const auto text = test::read_file(a);
  CHECK(text == test::read_file(b));
  CHECK(text.find("\"thr1\": 0.05") != std::string::npos);
  CHECK(text.find("\"reward_model\": 0.12345678901") != std::string::npos);
  CHECK(text.find("0.1234567890123") == std::string::npos);
  CHECK(text.find("\"harm_empirical\": null") != std::string::npos);

  const auto c = test::tmp_dir() / "report.csv";
  write_report(r, c, format_for(c));
  const auto csv = test::read_file(c);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.rfind("method,lambda,", 0) == 0);
  CHECK(csv.find("pessimistic,0.05,,0.123456789012,0.05,") != std::string::npos);

  CHECK_THROWS_AS(write_report(r, test::tmp_dir() / "no_such_dir" / "r.json", ReportFormat::json),
                  IoError);
}

TEST_CASE("format_real uses 12 significant digits") {
  CHECK(format_real(0.05) == "0.05");
  CHECK(format_real(1.0 / 3.0) == "0.333333333333");
  CHECK(format_real(123456789.123456789) == "123456789.123");
  CHECK(format_real(-0.0) == "0");
}
