#include "harmitr/cli.hpp"
#include "harmitr/simulation.hpp"

#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace harmitr;
using Json = nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "harmitr");
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::string path(const std::string& name) { return (test::tmp_dir() / name).string(); }

std::string sim_csv(std::size_t n, std::size_t r, const std::string& name) {
  SimulationConfig cfg;
  cfg.n = n;
  const auto p = path(name);
  write_observations(generate_dataset(cfg, r), p);
  return p;
}

}  // namespace

TEST_CASE("cli simulate") {
  const auto out = path("sim.json");
  const auto r = cli({"simulate", "--delta", "0", "--lambda", "0.05", "--n", "300", "--reps", "6",
                      "--seed", "11", "--workers", "1", "--out", out});
  INFO(r.err);
  REQUIRE(r.status == 0);
  const auto j = Json::parse(test::read_file(out));
  CHECK(j["replications"] == 6);
  CHECK(j["methods"].size() == 5);
  CHECK(j["methods"][0]["method"] == "cate");
  CHECK(j["methods"][0]["harm"]["mean"].is_number());
  const auto long_csv = test::read_file(path("sim_replicates.csv"));
  CHECK(std::count(long_csv.begin(), long_csv.end(), '\n') == 1 + 6 * 5);

  const auto out4 = path("sim4.json");
  REQUIRE(cli({"simulate", "--lambda", "0.05", "--n", "300", "--reps", "6", "--seed", "11",
               "--workers", "4", "--out", out4})
              .status == 0);
  CHECK(test::read_file(out4) == test::read_file(out));
  CHECK(test::read_file(path("sim4_replicates.csv")) == long_csv);

  const auto two = path("sim_two.csv");
  REQUIRE(cli({"simulate", "--n", "200", "--reps", "3", "--methods", "cate", "expert(0.1)",
               "--out", two})
              .status == 0);
  const auto csv = test::read_file(two);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("cli fit and evaluate") {
  const auto data = sim_csv(400, 2, "cli_data.csv");
  const auto out = path("fit.json");
  auto r = cli({"fit", "--data", data, "--method", "pessimistic", "--lambda", "0.05", "--folds",
                "1", "--out", out});
  INFO(r.err);
  REQUIRE(r.status == 0);
  const auto j = Json::parse(test::read_file(out));
  CHECK(j["method"] == "pessimistic");
  CHECK(j["beta_hat"].size() == 1);
  CHECK(j["beta_hat"][0].get<double>() >= 0.0);
  CHECK(j["plugin_harm"][0].get<double>() <= 0.05);
  const auto decisions = load_decisions(path("fit_decisions.csv"));
  CHECK(decisions.size() == 400);
  CHECK(test::read_file(path("fit_decisions.csv")).rfind("decision\n", 0) == 0);

  const auto eval = path("eval.json");
  r = cli({"evaluate", "--data", data, "--method", "naive", "--out", eval});
  REQUIRE(r.status == 0);
  const auto table = load_observations(data);
  double mean_a = 0.0;
  for (int a : table.treatment) mean_a += a;
  const auto e = Json::parse(test::read_file(eval));
  CHECK(e["proportion_treated"].get<double>() == doctest::Approx(mean_a / 400.0).epsilon(1e-12));
  CHECK(e["method"] == "naive");

  const auto audit = path("audit.json");
  r = cli({"evaluate", "--data", data, "--decisions", path("fit_decisions.csv"), "--out", audit});
  REQUIRE(r.status == 0);
  const auto a = Json::parse(test::read_file(audit));
  CHECK(a["method"] == "audit:fit_decisions.csv");
  CHECK(a["thr1"].get<double>() <= 0.05 + 1e-12);

  const auto boot1 = path("boot1.csv");
  const auto boot3 = path("boot3.csv");
  REQUIRE(cli({"bootstrap", "--data", data, "--bootstrap", "20", "--workers", "1", "--out", boot1})
              .status == 0);
  REQUIRE(cli({"bootstrap", "--data", data, "--bootstrap", "20", "--workers", "3", "--out", boot3})
              .status == 0);
  CHECK(test::read_file(boot1) == test::read_file(boot3));
}

TEST_CASE("cli configuration and errors") {
  SUBCASE("config file values are overridden by flags") {
    const auto data = sim_csv(200, 5, "cfg_data.csv");
    const auto cfg = test::write_tmp(
        "cfg.json", R"({"data": ")" + data + R"(", "method": "expert", "rho_lower": 0.1})");
    const auto out = path("cfg_fit.json");
    REQUIRE(cli({"fit", "--config", cfg.string(), "--out", out}).status == 0);
    CHECK(Json::parse(test::read_file(out))["method"] == "expert(0.1)");
    REQUIRE(cli({"fit", "--config", cfg.string(), "--rho-lower", "0", "--out", out}).status == 0);
    CHECK(Json::parse(test::read_file(out))["method"] == "expert(0)");
  }

  SUBCASE("every problem is reported at once") {
    const auto r = cli({"fit", "--lambda", "2", "--alpha", "0", "--method", "greedy"});
    CHECK(r.status == 2);
    CHECK(r.err.find("--data is required") != std::string::npos);
    CHECK(r.err.find("--out is required") != std::string::npos);
    CHECK(r.err.find("lambda must lie in [0, 1]") != std::string::npos);
    CHECK(r.err.find("alpha must lie in (0, 1)") != std::string::npos);
    CHECK(r.err.find("unknown method 'greedy'") != std::string::npos);
  }

  SUBCASE("unknown keys and commands") {
    const auto cfg = test::write_tmp("bad.json", R"({"lamda": 0.1})");
    auto r = cli({"simulate", "--config", cfg.string(), "--out", path("x.json")});
    CHECK(r.status == 2);
    CHECK(r.err.find("lamda") != std::string::npos);
    r = cli({"train"});
    CHECK(r.status == 2);
    CHECK(r.err.rfind("error: usage:", 0) == 0);
    r = cli({"simulate", "--frobnicate", "1"});
    CHECK(r.status == 2);
  }

  SUBCASE("runtime errors name their kind") {
    auto r = cli({"fit", "--data", path("does_not_exist.csv"), "--out", path("m.json")});
    CHECK(r.status == 1);
    CHECK(r.err.rfind("error: io:", 0) == 0);
    const auto bad = test::write_tmp("bad_rows.csv", "x1,a,y\n0.1,1,1\n0.2,0,2\n");
    r = cli({"fit", "--data", bad.string(), "--out", path("m.json")});
    CHECK(r.status == 1);
    CHECK(r.err.rfind("error: validation:", 0) == 0);
    CHECK(r.err.find("row 2") != std::string::npos);
  }

  SUBCASE("help") {
    const auto r = cli({"--help"});
    CHECK(r.status == 0);
    CHECK(r.out.find("--rho-lower") != std::string::npos);
  }
}
