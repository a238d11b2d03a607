#pragma once

#include "harmitr/policy.hpp"
#include "harmitr/tabular_io.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace harmitr {

struct SimulationConfig {
  double delta = 0.0;
  std::size_t n = 1000;
  double lambda = 0.05;
  std::vector<Method> methods;
  std::size_t replications = 200;
  std::size_t K = 1;
  std::uint64_t seed = 20250101;
  double alpha = 0.10;
  double treatment_effect_shift = 0.2;
  double cost = 0.0;
  ProbitOptions probit;

  /// cate, pessimistic, conservative(alpha), expert(0), expert(0.1).
  static std::vector<Method> default_methods(double alpha = 0.10);
  void validate() const;
};

/// X ~ N(0, I3); P(A=1|X) = Phi((X1 - X2 + X3)/3); U ~ N(0,1);
/// P(Y(0)=1|X,U) = Phi(s + delta U); P(Y(1)=1|X,U) = Phi(s + delta U/2 + shift)
/// with s = (X1 + X2 + X3)/3. Draw order: X, A, U, Y(0), Y(1).
ObservationTable generate_dataset(const SimulationConfig& config, std::size_t replicate_index);

/// True conditional means after integrating U out:
/// mu_a(x) = Phi((s + shift a) / sqrt(1 + delta^2 / 4^a)).
double true_mu(const SimulationConfig& config, std::span<const double> x, int arm);

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::string method;
  bool failed = false;
  double harm = 0.0;
  double reward = 0.0;
  double proportion_treated = 0.0;
  double plugin_harm = 0.0;  // max over folds of Psi(beta_hat); constrained methods only
  bool plugin_ok = true;
  std::vector<double> beta_hat;
};

struct StudyResult {
  StudySummary summary;
  std::vector<ReplicateRecord> records;  // replicate-major, then method order
};

/// Replicates run in parallel; results depend only on (config, seed).
StudyResult run_study(const SimulationConfig& config, unsigned workers = 1);

/// method,replicate,harm,reward (long format for boxplots).
void write_replicates_csv(const StudyResult& result, const std::filesystem::path& path);

}  // namespace harmitr
