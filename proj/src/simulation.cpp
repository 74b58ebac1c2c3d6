#include "erfe/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "erfe/covariance.hpp"
#include "erfe/csv.hpp"

namespace erfe {

std::string to_string(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::gaussian:
      return "gaussian";
    case ErrorLaw::student_t3:
      return "student_t3";
    case ErrorLaw::chi2_3:
      return "chi2_3";
  }
  return "unknown";
}

ErrorLaw parse_error_law(const std::string& name) {
  if (name == "gaussian" || name == "normal") return ErrorLaw::gaussian;
  if (name == "student_t3" || name == "t3") return ErrorLaw::student_t3;
  if (name == "chi2_3" || name == "chi2") return ErrorLaw::chi2_3;
  throw std::invalid_argument("unknown error law '" + name + "' (gaussian, student_t3, chi2_3)");
}

Distribution error_distribution(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::gaussian:
      return Gaussian{0.0, 1.0};
    case ErrorLaw::student_t3:
      return StudentT{3.0};
    case ErrorLaw::chi2_3:
      return ChiSquared{3.0};
  }
  throw std::invalid_argument("unknown error law");
}

void SimulationConfig::validate() const {
  if (n < 1 || m < 2) throw std::invalid_argument("simulation needs n >= 1 and m >= 2");
  if (replications < 1) throw std::invalid_argument("simulation needs at least one replication");
  if (taus.empty()) throw std::invalid_argument("simulation needs at least one asymmetric point");
  for (double t : taus) AsymmetricPoint check(t);
  if (joint) {
    for (std::size_t k = 1; k < taus.size(); ++k) {
      if (!(taus[k] > taus[k - 1])) throw NonincreasingTaus("joint fits need strictly increasing taus");
    }
    if (v.size() != 0 && static_cast<std::size_t>(v.size()) != taus.size()) {
      throw WeightDimensionMismatch("influence weights do not match the asymmetric points");
    }
  }
  if (!(x2_subject_share > 0.0 && x2_subject_share < 1.0)) {
    throw std::invalid_argument("x2_subject_share must lie in (0, 1)");
  }
  if (alpha_x2_corr * alpha_x2_corr > x2_subject_share) {
    throw std::invalid_argument("alpha_x2_corr is infeasible for the chosen x2_subject_share");
  }
  if (!(x1_df > 0.0) || !(x2_sd > 0.0)) throw std::invalid_argument("invalid regressor law parameters");
  irls.validate();
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
}

TrueCoefficients true_coefficients(double tau, const SimulationConfig& config) {
  TrueCoefficients t;
  t.beta1 = config.beta1;
  t.beta2 = config.beta2;
  if (config.gamma != 0.0) {
    t.beta2 += config.gamma * distribution_expectile(error_distribution(config.error_law), AsymmetricPoint(tau));
  }
  return t;
}

SimulatedPanel generate_dgp(const SimulationConfig& config, std::uint64_t replication) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> x1_chi(config.x1_df);
  std::student_t_distribution<double> t3(3.0);
  std::chi_squared_distribution<double> chi3(3.0);

  const double share = config.x2_subject_share;
  const double load_s = std::sqrt(share);
  const double load_e = std::sqrt(1.0 - share);
  // corr(alpha, x2) = load_s * rho_star, since alpha and x2 have unit-scale factors.
  const double rho_star = config.alpha_x2_corr / load_s;
  const double load_w = std::sqrt(1.0 - rho_star * rho_star);

  const auto n_obs = static_cast<Eigen::Index>(config.n * config.m);
  Eigen::VectorXd y(n_obs);
  Eigen::MatrixXd x(n_obs, 2);
  Eigen::VectorXd errors(n_obs);
  Eigen::VectorXd alpha(static_cast<Eigen::Index>(config.n));
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(n_obs));

  Eigen::Index row = 0;
  for (std::size_t i = 0; i < config.n; ++i) {
    const double s = normal(rng);
    const double w = normal(rng);
    const double a = config.alpha_mean + rho_star * s + load_w * w;
    alpha[static_cast<Eigen::Index>(i)] = a;
    const std::string label = std::to_string(i + 1);
    for (std::size_t j = 0; j < config.m; ++j, ++row) {
      const double x2 = config.x2_mean + config.x2_sd * (load_s * s + load_e * normal(rng));
      const double z = normal(rng);
      const double x1 = (z + config.x1_ncp) / std::sqrt(x1_chi(rng) / config.x1_df);
      double e = 0.0;
      switch (config.error_law) {
        case ErrorLaw::gaussian:
          e = normal(rng);
          break;
        case ErrorLaw::student_t3:
          e = t3(rng);
          break;
        case ErrorLaw::chi2_3:
          e = chi3(rng);
          break;
      }
      x(row, 0) = x1;
      x(row, 1) = x2;
      errors[row] = e;
      y[row] = config.beta1 * x1 + config.beta2 * x2 + a + (1.0 + config.gamma * x2) * e;
      labels.push_back(label);
    }
  }
  return SimulatedPanel{PanelData(std::move(labels), std::move(y), std::move(x), {"x1", "x2"}),
                        std::move(alpha), std::move(errors)};
}

ReplicationResult run_replication(const SimulationConfig& config, std::uint64_t replication) {
  const auto q = static_cast<Eigen::Index>(config.taus.size());
  ReplicationResult rep;
  rep.estimate = Eigen::MatrixXd::Constant(2, q, std::numeric_limits<double>::quiet_NaN());
  rep.se = rep.estimate;
  rep.iterations.assign(config.taus.size(), 0);
  try {
    const SimulatedPanel sim = generate_dgp(config, replication);
    if (config.joint) {
      const Eigen::VectorXd v =
          config.v.size() ? config.v : Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
      const MultiFitResult fit = fit_erfe_multi(sim.panel, config.taus, v, config.irls);
      const SandwichCovariance cov = sandwich_multi(sim.panel, fit);
      for (Eigen::Index k = 0; k < q; ++k) {
        rep.estimate.col(k) = fit.betas.col(k);
        rep.se.col(k) = cov.se.segment(2 * k, 2);
        rep.iterations[static_cast<std::size_t>(k)] = fit.iterations;
      }
    } else {
      for (Eigen::Index k = 0; k < q; ++k) {
        const FitResult fit = fit_erfe_single(sim.panel, AsymmetricPoint(config.taus[static_cast<std::size_t>(k)]),
                                              config.irls);
        const SandwichCovariance cov = sandwich_single(sim.panel, fit);
        rep.estimate.col(k) = fit.beta;
        rep.se.col(k) = cov.se;
        rep.iterations[static_cast<std::size_t>(k)] = fit.iterations;
      }
    }
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.failure = e.what();
  }
  return rep;
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

std::vector<MetricRow> aggregate_metrics(const SimulationConfig& config,
                                         const std::vector<ReplicationResult>& reps) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<MetricRow> rows;
  for (std::size_t k = 0; k < config.taus.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const TrueCoefficients truth = true_coefficients(config.taus[k], config);
    std::vector<double> iters;
    for (const auto& r : reps) {
      if (r.ok) iters.push_back(r.iterations[k]);
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
      MetricRow row;
      row.tau = config.taus[k];
      row.coefficient = c == 0 ? "beta1" : "beta2";
      row.true_value = c == 0 ? truth.beta1 : truth.beta2;
      double sum = 0.0;
      double se_sum = 0.0;
      std::size_t count = 0;
      for (const auto& r : reps) {
        if (!r.ok) continue;
        sum += r.estimate(c, kk);
        se_sum += r.se(c, kk);
        ++count;
      }
      row.replications = count;
      row.failures = reps.size() - count;
      row.median_iterations = median(iters);
      if (count == 0) {
        row.mean_estimate = row.bias = row.sd = row.mean_se = row.se_sd_ratio = nan;
      } else {
        const double r_count = static_cast<double>(count);
        row.mean_estimate = sum / r_count;
        row.bias = row.mean_estimate - row.true_value;
        double ss = 0.0;
        for (const auto& r : reps) {
          if (!r.ok) continue;
          const double d = r.estimate(c, kk) - row.mean_estimate;
          ss += d * d;
        }
        row.sd = std::sqrt(ss / r_count);
        row.mean_se = se_sum / r_count;
        row.se_sd_ratio = row.sd > 0.0 ? row.mean_se / row.sd : nan;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

ScenarioMetrics run_monte_carlo(const SimulationConfig& config) {
  config.validate();
  const double size = static_cast<double>(config.n) * static_cast<double>(config.m) *
                      static_cast<double>(config.replications);
  if (size > config.budget) {
    throw BudgetExceeded("simulation size n*m*replications = " + format_number(size) +
                         " exceeds the budget " + format_number(config.budget));
  }

  ScenarioMetrics metrics;
  metrics.config = config;
  metrics.replications.resize(config.replications);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t r = next++; r < config.replications; r = next++) {
      metrics.replications[r] = run_replication(config, r);
    }
  };
  const std::size_t threads = std::min(config.workers, config.replications);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  metrics.rows = aggregate_metrics(config, metrics.replications);
  return metrics;
}

namespace {

std::string num_or_na(double v) { return std::isfinite(v) ? format_number(v) : "NA"; }

std::string scenario_prefix(const SimulationConfig& c) {
  return std::to_string(c.n) + "," + std::to_string(c.m) + "," + format_number(c.gamma) + "," +
         to_string(c.error_law) + "," + (c.joint ? "1" : "0") + ",";
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  out << "n,m,gamma,error_law,joint,tau,coefficient,true_value,mean_estimate,bias,sd,mean_se,"
         "se_sd_ratio,median_iterations,replications,failures\n";
}

void write_metrics_rows(std::ostream& out, const ScenarioMetrics& metrics) {
  const std::string prefix = scenario_prefix(metrics.config);
  for (const auto& r : metrics.rows) {
    out << prefix << format_number(r.tau) << ',' << r.coefficient << ',' << num_or_na(r.true_value) << ','
        << num_or_na(r.mean_estimate) << ',' << num_or_na(r.bias) << ',' << num_or_na(r.sd) << ','
        << num_or_na(r.mean_se) << ',' << num_or_na(r.se_sd_ratio) << ',' << num_or_na(r.median_iterations)
        << ',' << r.replications << ',' << r.failures << '\n';
  }
}

void write_replications_header(std::ostream& out) {
  out << "n,m,gamma,error_law,joint,replication,tau,coefficient,estimate,se,iterations,ok\n";
}

void write_replication_rows(std::ostream& out, const ScenarioMetrics& metrics) {
  const std::string prefix = scenario_prefix(metrics.config);
  const auto& taus = metrics.config.taus;
  for (std::size_t r = 0; r < metrics.replications.size(); ++r) {
    const auto& rep = metrics.replications[r];
    for (std::size_t k = 0; k < taus.size(); ++k) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        const auto kk = static_cast<Eigen::Index>(k);
        out << prefix << r << ',' << format_number(taus[k]) << ',' << (c == 0 ? "beta1" : "beta2") << ','
            << num_or_na(rep.estimate(c, kk)) << ',' << num_or_na(rep.se(c, kk)) << ','
            << rep.iterations[k] << ',' << (rep.ok ? 1 : 0) << '\n';
      }
    }
  }
}

}  // namespace erfe
