#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "erfe/estimator.hpp"

namespace erfe {

enum class ErrorLaw { gaussian, student_t3, chi2_3 };

std::string to_string(ErrorLaw law);
ErrorLaw parse_error_law(const std::string& name);
Distribution error_distribution(ErrorLaw law);

// Location-scale panel design
//   y_ij = x_ij1 b1 + x_ij2 b2 + alpha_i + (1 + gamma x_ij2) e_ij
// with x1 ~ noncentral t(x1_df, x1_ncp), x2 ~ N(x2_mean, x2_sd^2) built from
// a subject factor s_i and idiosyncratic noise with shares
// (x2_subject_share, 1 - x2_subject_share), alpha_i ~ N(alpha_mean, 1) loading
// on the same s_i so that corr(alpha_i, x_ij2) = alpha_x2_corr.
struct SimulationConfig {
  std::size_t n = 100;
  std::size_t m = 5;
  double gamma = 0.0;
  ErrorLaw error_law = ErrorLaw::gaussian;
  std::vector<double> taus{0.1, 0.3, 0.5, 0.8, 0.9};
  std::size_t replications = 200;
  std::uint64_t seed = 20240607;

  double beta1 = 0.6;
  double beta2 = 1.0;
  double x1_df = 3.0;
  double x1_ncp = 1.3;
  double x2_mean = 2.0;
  double x2_sd = 1.5;
  double x2_subject_share = 0.5;
  double alpha_mean = 1.0;
  double alpha_x2_corr = 0.5;

  bool joint = false;   // one joint multi-tau fit per replication
  Eigen::VectorXd v;    // influence weights for joint fits (empty: uniform)
  IrlsConfig irls{};

  std::size_t workers = 1;
  double budget = 1e8;  // upper bound on n * m * replications

  void validate() const;
};

struct TrueCoefficients {
  double beta1 = 0.0;
  double beta2 = 0.0;
};

// beta1_tau = beta1; beta2_tau = beta2 + gamma * mu_tau(error law).
TrueCoefficients true_coefficients(double tau, const SimulationConfig& config);

struct SimulatedPanel {
  PanelData panel;
  Eigen::VectorXd alpha;  // realised subject effects
  Eigen::VectorXd errors; // realised e_ij, in panel row order
};

// Deterministic in (config.seed, replication): each replication owns an
// independently seeded engine.
SimulatedPanel generate_dgp(const SimulationConfig& config, std::uint64_t replication);

// One replication's estimates at every tau.
struct ReplicationResult {
  bool ok = false;
  std::string failure;
  Eigen::MatrixXd estimate;  // 2 x |taus|
  Eigen::MatrixXd se;        // 2 x |taus|
  std::vector<int> iterations;
};

struct MetricRow {
  double tau = 0.0;
  std::string coefficient;   // "beta1" / "beta2"
  double true_value = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd = 0.0;           // divisor R (successful replications)
  double mean_se = 0.0;
  double se_sd_ratio = 0.0;  // NaN when sd == 0
  double median_iterations = 0.0;
  std::size_t replications = 0;
  std::size_t failures = 0;
};

struct ScenarioMetrics {
  SimulationConfig config;
  std::vector<MetricRow> rows;                 // tau-major, then coefficient
  std::vector<ReplicationResult> replications; // in replication order
};

ReplicationResult run_replication(const SimulationConfig& config, std::uint64_t replication);

// Aggregates stored replication results in replication order.
std::vector<MetricRow> aggregate_metrics(const SimulationConfig& config,
                                         const std::vector<ReplicationResult>& reps);

// Throws BudgetExceeded when n * m * replications exceeds config.budget.
ScenarioMetrics run_monte_carlo(const SimulationConfig& config);

// CSV: one row per scenario x tau x coefficient.
void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const ScenarioMetrics& metrics);
// Per-replication estimate dump.
void write_replications_header(std::ostream& out);
void write_replication_rows(std::ostream& out, const ScenarioMetrics& metrics);

}  // namespace erfe
