#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace harmitr {

using Decisions = std::vector<int>;

struct PotentialOutcomes {
  std::vector<int> y0;
  std::vector<int> y1;
};

/// Observed sample: covariates X (n x d), binary treatment A and outcome Y,
/// plus the potential outcomes when the data were simulated.
struct ObservationTable {
  Eigen::MatrixXd covariates;
  std::vector<int> treatment;
  std::vector<int> outcome;
  std::optional<PotentialOutcomes> potential_outcomes;

  std::size_t n_rows() const { return treatment.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(covariates.cols()); }
  bool has_potential_outcomes() const { return potential_outcomes.has_value(); }

  /// Rows `index` in the given order (duplicates allowed).
  ObservationTable subset(const std::vector<std::size_t>& index) const;
};

/// Checks every table invariant; throws ValidationError / ConsistencyError.
void validate(const ObservationTable& table);

/// True when the vector contains at least one 0 and one 1.
bool has_both_arms(const std::vector<int>& treatment);

/// Column-name mapping. Empty `covariates` means "x1, x2, ... as long as the
/// header has them".
struct ColumnSchema {
  std::string outcome = "y";
  std::string treatment = "a";
  std::vector<std::string> covariates;
  std::string y0 = "y0";
  std::string y1 = "y1";
};

ObservationTable load_observations(const std::filesystem::path& path,
                                   const ColumnSchema& schema = {});

/// Writes y, a, x1..xd[, y0, y1] with reals at 12 significant digits.
void write_observations(const ObservationTable& table, const std::filesystem::path& path);

/// Reads a single 0/1 column (default header "decision").
Decisions load_decisions(const std::filesystem::path& path, const std::string& column = "decision");
void write_decisions(const Decisions& decisions, const std::filesystem::path& path);

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct EvaluationReport {
  std::string method;
  double lambda = 0.0;
  std::optional<double> reward_empirical;
  double reward_model = 0.0;
  double thr1 = 0.0;
  double thr2 = 0.0;
  double thr3 = 0.0;
  std::optional<double> harm_empirical;
  double proportion_treated = 0.0;
  std::vector<double> beta_hat;
  /// Keyed by metric name ("reward_model", "thr1", ...). Empty without bootstrap.
  std::map<std::string, ConfidenceInterval> ci;
  std::optional<double> ci_level;
  std::size_t bootstrap_replicates = 0;
  std::size_t bootstrap_redraws = 0;
  std::string evaluation_fits = "full_sample";
};

/// Per-method aggregate of a replicated simulation study.
struct MethodSummary {
  std::string method;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  double harm_mean = 0, harm_sd = 0, harm_q1 = 0, harm_median = 0, harm_q3 = 0;
  double reward_mean = 0, reward_sd = 0, reward_q1 = 0, reward_median = 0, reward_q3 = 0;
  double proportion_treated_mean = 0;
  double plugin_harm_mean = 0;
  std::size_t plugin_violations = 0;
};

struct StudySummary {
  double delta = 0;
  std::size_t n = 0;
  double lambda = 0;
  std::size_t K = 1;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::vector<MethodSummary> methods;
};

enum class ReportFormat { json, csv };

/// Picks the format from the file extension (.csv, otherwise json).
ReportFormat format_for(const std::filesystem::path& path);

void write_report(const EvaluationReport& report, const std::filesystem::path& path,
                  ReportFormat format);
void write_report(const StudySummary& summary, const std::filesystem::path& path,
                  ReportFormat format);

/// Renders a real with 12 significant digits, the precision of every file we write.
std::string format_real(double value);

/// Rounds to the value format_real would print.
double round12(double value);

/// Writes `content` to `path`, throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace harmitr
