#include "harmitr/bounds.hpp"
#include "harmitr/error.hpp"
#include "harmitr/evaluation.hpp"
#include "harmitr/parallel.hpp"
#include "harmitr/simulation.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace harmitr;

namespace {

ObservationTable two_rows() {
  ObservationTable t;
  t.covariates = Eigen::MatrixXd::Zero(2, 1);
  t.treatment = {1, 0};
  t.outcome = {0, 0};
  t.potential_outcomes = PotentialOutcomes{{1, 0}, {0, 1}};
  return t;
}

ObservationTable sim_table(std::size_t n, std::size_t r, std::uint64_t seed = 5) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return generate_dataset(cfg, r);
}

}  // namespace

TEST_CASE("realized metrics") {
  const auto t = two_rows();
  auto m = truth_metrics({0, 0}, t);
  CHECK(m.harm == 0.0);
  CHECK(m.reward == 0.5);
  CHECK(m.proportion_treated == 0.0);
  m = truth_metrics({1, 1}, t);
  CHECK(m.harm == 0.5);
  CHECK(m.reward == 0.5);
  CHECK(m.proportion_treated == 1.0);

  auto bare = t;
  bare.potential_outcomes.reset();
  CHECK_THROWS_AS(truth_metrics({0, 0}, bare), Error);
  CHECK_THROWS_AS(truth_metrics({0}, t), DimensionError);
}

TEST_CASE("plug-in metrics") {
  const auto s = test::surface_from({0.6}, {0.3});
  auto m = plugin_metrics({0}, s);
  CHECK(m.thr1 == 0.0);
  CHECK(m.thr2 == 0.0);
  CHECK(m.thr3 == 0.0);
  CHECK(m.reward_model == 0.6);

  m = plugin_metrics({1}, s);
  CHECK(std::abs(m.thr1 - 0.6) < 1e-12);
  CHECK(std::abs(m.thr2 - 0.42) < 1e-12);
  CHECK(std::abs(m.thr3 - 0.397550) < 1e-6);
  CHECK(std::abs(m.thr3 - expert_upper_bound(0.6, 0.3, 0.1)) < 1e-12);
  CHECK(m.reward_model == 0.3);
  CHECK(m.proportion_treated == 1.0);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> mu0, mu1;
    Decisions d;
    double manual_thr1 = 0.0;
    for (int i = 0; i < 50; ++i) {
      mu0.push_back(0.01 + 0.98 * rng.uniform());
      mu1.push_back(0.01 + 0.98 * rng.uniform());
      d.push_back(rng.bernoulli(0.5) ? 1 : 0);
      if (d.back()) manual_thr1 += fh_bounds(mu0.back(), mu1.back()).upper;
    }
    const auto p = plugin_metrics(d, test::surface_from(mu0, mu1));
    CHECK(p.thr3 <= p.thr2);
    CHECK(p.thr2 <= p.thr1);
    CHECK(std::abs(p.thr1 - manual_thr1 / 50.0) < 1e-12);
  }
}

TEST_CASE("percentile intervals") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(999 - i);
  const auto ci = percentile_interval(v, 0.95);
  CHECK(ci.lower == 24.0);   // 25th order statistic
  CHECK(ci.upper == 974.0);  // 975th
  const auto flat = percentile_interval(std::vector<double>(40, 0.3), 0.9);
  CHECK(flat.lower == flat.upper);
  CHECK_THROWS_AS(percentile_interval({}, 0.95), DomainError);
  CHECK_THROWS_AS(percentile_interval({1.0}, 1.0), DomainError);
}

TEST_CASE("pipeline and audit evaluation") {
  const auto table = sim_table(500, 0);
  PipelineConfig cfg;
  cfg.method = Method::parse("naive");
  const auto r = run_pipeline(table, cfg);
  double mean_a = 0.0;
  for (int a : table.treatment) mean_a += a;
  CHECK(r.metrics.proportion_treated == doctest::Approx(mean_a / 500.0).epsilon(1e-14));
  CHECK(r.metrics.harm_empirical.has_value());

  cfg.method = Method::parse("pessimistic");
  const auto p = run_pipeline(table, cfg);
  REQUIRE(p.beta_hat.size() == 1);
  const auto audit = evaluate_decisions(table, p.decision);
  CHECK(audit.thr1 == p.metrics.thr1);
  CHECK(audit.reward_model == p.metrics.reward_model);
  CHECK(audit.thr1 <= 0.05 + 1e-15);
  CHECK_THROWS_AS(evaluate_decisions(table, Decisions(3, 0)), DimensionError);

  cfg.K = 5;
  const auto crossfit = run_pipeline(table, cfg);
  CHECK(crossfit.beta_hat.size() == 5);
  CHECK(crossfit.metrics.thr3 <= crossfit.metrics.thr2);
  CHECK(crossfit.metrics.thr2 <= crossfit.metrics.thr1);
}

TEST_CASE("bootstrap intervals") {
  const auto table = sim_table(300, 1);
  PipelineConfig cfg;
  cfg.method = Method::parse("pessimistic");

  SUBCASE("identical across worker counts") {
    const auto a = bootstrap_cis(table, cfg, 40, 77, 0.9, 1);
    const auto b = bootstrap_cis(table, cfg, 40, 77, 0.9, 4);
    REQUIRE(a.replicates.size() == 40);
    for (std::size_t i = 0; i < 40; ++i) {
      CHECK(a.replicates[i].reward_model == b.replicates[i].reward_model);
      CHECK(a.replicates[i].thr1 == b.replicates[i].thr1);
      CHECK(a.replicates[i].harm_empirical == b.replicates[i].harm_empirical);
    }
    CHECK(a.redraws == b.redraws);
    for (const auto& [name, ci] : a.ci) {
      CHECK(ci.lower == b.ci.at(name).lower);
      CHECK(ci.upper == b.ci.at(name).upper);
      CHECK(ci.lower <= ci.upper);
    }
    CHECK(a.ci.count("harm_empirical") == 1);
  }

  SUBCASE("a metric that never varies has a zero-width interval") {
    auto never = cfg;
    never.method = Method::parse("cate");
    never.cost = 1.0;
    const auto r = bootstrap_cis(table, never, 20, 1, 0.95, 2);
    CHECK(r.ci.at("proportion_treated").lower == 0.0);
    CHECK(r.ci.at("proportion_treated").upper == 0.0);
    CHECK(r.ci.at("thr1").lower == r.ci.at("thr1").upper);
  }

  SUBCASE("resamples missing an arm are redrawn") {
    auto lopsided = table.subset({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    lopsided.treatment = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    lopsided.outcome = {1, 0, 1, 0, 1, 0, 0, 1, 0, 1};
    lopsided.potential_outcomes.reset();
    auto c = cfg;
    c.nuisance.probit.ridge = 1e-2;
    try {
      const auto r = bootstrap_cis(lopsided, c, 50, 3, 0.95, 2);
      CHECK(r.redraws > 0);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("redrawn") != std::string::npos);
    }
  }

  CHECK_THROWS_AS(bootstrap_cis(table, cfg, 1, 1, 0.95, 1), DomainError);
}

TEST_CASE("bootstrap intervals usually contain the point estimate") {
  // 200 datasets at level 0.95; require at least 90% less 3 binomial SE.
  const std::size_t runs = 200;
  std::vector<char> covered_reward(runs, 0), covered_thr(runs, 0);
  PipelineConfig cfg;
  cfg.method = Method::parse("pessimistic");
  for (std::size_t r = 0; r < runs; ++r) {
    const auto table = sim_table(400, r, 4242);
    const auto point = run_pipeline(table, cfg).metrics;
    const auto boot = bootstrap_cis(table, cfg, 100, derive_seed(4242, r), 0.95, default_workers());
    const auto& rm = boot.ci.at("reward_model");
    const auto& t1 = boot.ci.at("thr1");
    covered_reward[r] = rm.lower <= point.reward_model && point.reward_model <= rm.upper;
    covered_thr[r] = t1.lower <= point.thr1 && point.thr1 <= t1.upper;
  }
  const double floor = 0.9 * runs - 3.0 * std::sqrt(runs * 0.9 * 0.1);
  const auto hits_reward = std::count(covered_reward.begin(), covered_reward.end(), 1);
  const auto hits_thr = std::count(covered_thr.begin(), covered_thr.end(), 1);
  MESSAGE("reward_model covered " << hits_reward << ", thr1 covered " << hits_thr);
  CHECK(static_cast<double>(hits_reward) >= floor);
  CHECK(static_cast<double>(hits_thr) >= floor);
}

TEST_CASE("expected utility on discrete populations") {
  OraclePopulation pop;
  pop.strata = {{0.5, 0.3, 0.3, 0.05, 0.35}, {0.5, 0.4, 0.2, 0.15, 0.35}};
  CHECK(expected_utility_discrete({0, 0}, pop, 3.0) == 0.0);
  CHECK(expected_utility_discrete({1, 0}, pop, 2.0) == doctest::Approx(0.5 * (0.3 - 0.1)));
  CHECK_THROWS_AS(expected_utility_discrete({1}, pop, 1.0), DimensionError);
  CHECK_THROWS_AS(expected_utility_discrete({1, 0}, pop, -1.0), DomainError);

  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = test::random_population(rng, 1 + rng.below(10));
    const auto levels = test::threshold_harm_levels(p);
    const auto oracle = oracle_policy_discrete(p, levels[rng.below(levels.size())]);
    const double best = expected_utility_discrete(oracle.decision, p, oracle.beta);
    const std::size_t m = p.strata.size();
    Decisions d(m);
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
      for (std::size_t j = 0; j < m; ++j) d[j] = (mask >> j) & 1u;
      CHECK(expected_utility_discrete(d, p, oracle.beta) <= best + 1e-15);
    }
  }
}
