#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "erfe/covariance.hpp"
#include "erfe/csv.hpp"
#include "erfe/estimator.hpp"
#include "erfe/simulation.hpp"

namespace erfe::cli {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Common {
  std::string input;
  std::string subject_col;
  std::string response_col;
  std::vector<std::string> exclude;
  std::vector<double> taus;
  std::vector<double> v;
  bool joint = false;
  double level = 0.95;
  std::string format = "csv";
  std::uint64_t seed = 20240607;
  std::size_t workers = 1;
  int max_iter = IrlsConfig{}.max_iter;
  std::string out;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num_or_na(double v) { return std::isfinite(v) ? format_number(v) : "NA"; }

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void check_taus(const std::vector<double>& taus) {
  if (taus.empty()) throw UsageError("--tau needs at least one value");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw UsageError("--tau values must lie in (0, 1)");
  }
  for (std::size_t k = 1; k < taus.size(); ++k) {
    if (!(taus[k] > taus[k - 1])) throw NonincreasingTaus("--tau values must be strictly increasing");
  }
}

void add_io_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output file (default: standard output)");
  cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

void add_panel_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--input", c.input, "Long-format panel CSV")->required();
  cmd->add_option("--subject-col", c.subject_col, "Subject column (default: first column)");
  cmd->add_option("--response-col", c.response_col, "Response column (default: second column)");
  cmd->add_option("--exclude", c.exclude, "Columns to ignore")->delimiter(',');
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

PanelData load_panel(const Common& c) {
  std::istringstream in(read_file(c.input));
  return read_panel_csv(in, {c.subject_col, c.response_col, c.exclude});
}

std::string response_name(const Common& c) {
  if (!c.response_col.empty()) return c.response_col;
  std::istringstream in(read_file(c.input));
  const CsvTable table = read_csv(in);
  return table.header.size() > 1 ? table.header[1] : "y";
}

std::string subject_name(const Common& c) {
  if (!c.subject_col.empty()) return c.subject_col;
  std::istringstream in(read_file(c.input));
  const CsvTable table = read_csv(in);
  return table.header.empty() ? "subject" : table.header[0];
}

// Drops regressors annihilated by the within transform, warning about each.
std::vector<std::size_t> estimable_columns(const PanelData& panel, std::ostream& err) {
  const auto constant = subject_constant_columns(panel);
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < panel.num_regressors(); ++j) {
    if (std::find(constant.begin(), constant.end(), j) == constant.end()) {
      keep.push_back(j);
    } else {
      err << "warning: column '" << panel.column_names()[j]
          << "' is constant within every subject; it is dropped and reported as NA\n";
    }
  }
  if (keep.empty()) throw UsageError("no regressor varies within subjects");
  return keep;
}

void emit(const Common& c, const std::string& text, std::ostream& out) {
  if (c.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(c.out, std::ios::binary);
  if (!file) throw ParseError("cannot write '" + c.out + "'");
  file << text;
}

// ---- fit -----------------------------------------------------------------

struct CoefficientRow {
  std::string term;
  double estimate = kNaN;
  double se = kNaN;
  double lower = kNaN;
  double upper = kNaN;
};

struct TauBlock {
  double tau = 0.5;
  int iterations = 0;
  bool converged = true;
  std::vector<CoefficientRow> rows;
};

std::vector<CoefficientRow> coefficient_rows(const PanelData& full, std::span<const std::size_t> keep,
                                             const Eigen::VectorXd& beta, const Eigen::VectorXd& se,
                                             const std::vector<Interval>& ci) {
  std::vector<CoefficientRow> rows(full.num_regressors());
  for (std::size_t j = 0; j < full.num_regressors(); ++j) rows[j].term = full.column_names()[j];
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    auto& r = rows[keep[k]];
    r.estimate = beta[kk];
    r.se = se[kk];
    r.lower = ci[k].lower;
    r.upper = ci[k].upper;
  }
  return rows;
}

std::string render_fit(const Common& c, const std::string& method, const std::vector<TauBlock>& blocks) {
  std::ostringstream os;
  if (c.format == "json") {
    json doc;
    doc["command"] = "fit";
    doc["method"] = method;
    doc["level"] = c.level;
    json results = json::array();
    for (const auto& b : blocks) {
      json jb;
      jb["tau"] = b.tau;
      jb["iterations"] = b.iterations;
      jb["converged"] = b.converged;
      json coefs = json::array();
      for (const auto& r : b.rows) {
        coefs.push_back({{"term", r.term},
                         {"estimate", num_or_null(r.estimate)},
                         {"std_error", num_or_null(r.se)},
                         {"conf_low", num_or_null(r.lower)},
                         {"conf_high", num_or_null(r.upper)}});
      }
      jb["coefficients"] = std::move(coefs);
      results.push_back(std::move(jb));
    }
    doc["results"] = std::move(results);
    os << doc.dump(2) << '\n';
    return os.str();
  }
  os << "method,tau,term,estimate,std_error,conf_low,conf_high,iterations,converged\n";
  for (const auto& b : blocks) {
    for (const auto& r : b.rows) {
      os << method << ',' << format_number(b.tau) << ',' << csv_escape(r.term) << ','
         << num_or_na(r.estimate) << ',' << num_or_na(r.se) << ',' << num_or_na(r.lower) << ','
         << num_or_na(r.upper) << ',' << b.iterations << ',' << (b.converged ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

int cmd_fit(const Common& c, bool ols, std::ostream& out, std::ostream& err) {
  if (!(c.level > 0.0 && c.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  std::vector<double> taus = c.taus.empty() ? std::vector<double>{0.5} : c.taus;
  check_taus(taus);
  const PanelData full = load_panel(c);
  const auto keep = estimable_columns(full, err);
  const PanelData panel = full.with_columns(keep);

  IrlsConfig irls;
  irls.max_iter = c.max_iter;
  irls.require_convergence = false;
  std::vector<TauBlock> blocks;
  std::string method;
  if (ols) {
    method = "within_ols";
    const FitResult fit = within_ols(panel);
    const SandwichCovariance cov = sandwich_single(panel, fit);
    blocks.push_back({0.5, fit.iterations, fit.converged,
                      coefficient_rows(full, keep, fit.beta, cov.se, conf_intervals(fit.beta, cov, c.level))});
  } else if (c.joint) {
    method = "erfe_joint";
    Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(taus.size()));
    if (!c.v.empty()) v = Eigen::Map<const Eigen::VectorXd>(c.v.data(), static_cast<Eigen::Index>(c.v.size()));
    const MultiFitResult fit = fit_erfe_multi(panel, taus, v, irls);
    const SandwichCovariance cov = sandwich_multi(panel, fit);
    const Eigen::VectorXd stacked = fit.stacked_beta();
    const auto ci = conf_intervals(stacked, cov, c.level);
    const Eigen::Index p = fit.betas.rows();
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const std::vector<Interval> ck(ci.begin() + kk * p, ci.begin() + (kk + 1) * p);
      blocks.push_back({taus[k], fit.iterations, fit.converged,
                        coefficient_rows(full, keep, fit.betas.col(kk), cov.se.segment(kk * p, p), ck)});
    }
  } else {
    if (!c.v.empty()) err << "warning: --v is only used with --joint\n";
    method = "erfe";
    for (double t : taus) {
      const FitResult fit = fit_erfe_single(panel, AsymmetricPoint(t), irls);
      const SandwichCovariance cov = sandwich_single(panel, fit);
      blocks.push_back({t, fit.iterations, fit.converged,
                        coefficient_rows(full, keep, fit.beta, cov.se, conf_intervals(fit.beta, cov, c.level))});
    }
  }

  emit(c, render_fit(c, method, blocks), out);
  bool all_converged = true;
  for (const auto& b : blocks) {
    if (!b.converged) {
      all_converged = false;
      err << "warning: fit at tau " << format_number(b.tau) << " did not converge in " << b.iterations
          << " iterations\n";
    }
  }
  return all_converged ? kOk : kNotConverged;
}

// ---- transform -----------------------------------------------------------

int cmd_transform(const Common& c, std::ostream& out, std::ostream& err) {
  const std::vector<double> taus = c.taus.empty() ? std::vector<double>{0.5} : c.taus;
  if (taus.size() != 1) throw UsageError("transform takes a single --tau");
  check_taus(taus);
  const PanelData full = load_panel(c);
  const auto keep = estimable_columns(full, err);
  const PanelData panel = full.with_columns(keep);

  IrlsConfig irls;
  irls.max_iter = c.max_iter;
  irls.require_convergence = false;
  const FitResult fit = fit_erfe_single(panel, AsymmetricPoint(taus[0]), irls);
  const Eigen::VectorXd yt = apply_within(full.y(), fit.weights, full);
  const Eigen::MatrixXd xt = apply_within(full.x(), fit.weights, full);

  std::vector<std::size_t> order(full.num_obs());
  for (std::size_t r = 0; r < full.num_obs(); ++r) order[full.input_row()[r]] = r;

  const std::string subject = subject_name(c);
  const std::string response = response_name(c);
  std::ostringstream os;
  if (c.format == "json") {
    json doc;
    doc["command"] = "transform";
    doc["tau"] = taus[0];
    doc["iterations"] = fit.iterations;
    doc["converged"] = fit.converged;
    json cols;
    json subj = json::array(), yj = json::array(), psi = json::array(), w = json::array();
    std::vector<json> xs(full.num_regressors(), json::array());
    for (std::size_t r : order) {
      const auto rr = static_cast<Eigen::Index>(r);
      subj.push_back(full.subject_labels()[full.row_subject()[r]]);
      yj.push_back(yt[rr]);
      for (std::size_t j = 0; j < full.num_regressors(); ++j) xs[j].push_back(xt(rr, static_cast<Eigen::Index>(j)));
      psi.push_back(fit.weights.raw[rr]);
      w.push_back(fit.weights.normalized[rr]);
    }
    cols[subject] = std::move(subj);
    cols[response] = std::move(yj);
    for (std::size_t j = 0; j < full.num_regressors(); ++j) cols[full.column_names()[j]] = std::move(xs[j]);
    cols["psi"] = std::move(psi);
    cols["weight"] = std::move(w);
    doc["columns"] = std::move(cols);
    os << doc.dump(2) << '\n';
  } else {
    os << csv_escape(subject) << ',' << csv_escape(response);
    for (const auto& name : full.column_names()) os << ',' << csv_escape(name);
    os << ",psi,weight\n";
    for (std::size_t r : order) {
      const auto rr = static_cast<Eigen::Index>(r);
      os << csv_escape(full.subject_labels()[full.row_subject()[r]]) << ',' << format_number(yt[rr]);
      for (Eigen::Index j = 0; j < xt.cols(); ++j) os << ',' << format_number(xt(rr, j));
      os << ',' << format_number(fit.weights.raw[rr]) << ',' << format_number(fit.weights.normalized[rr]) << '\n';
    }
  }
  emit(c, os.str(), out);
  if (!fit.converged) {
    err << "warning: fit did not converge in " << fit.iterations << " iterations\n";
    return kNotConverged;
  }
  return kOk;
}

// ---- expectile -----------------------------------------------------------

int cmd_expectile(const Common& c, const std::string& column, const std::string& distribution,
                  std::ostream& out) {
  const std::vector<double> taus = c.taus.empty() ? std::vector<double>{0.5} : c.taus;
  check_taus(taus);
  if (c.input.empty() == distribution.empty()) {
    throw UsageError("expectile needs exactly one of --input or --distribution");
  }

  std::string source;
  std::vector<double> values;
  if (!distribution.empty()) {
    source = to_string(parse_error_law(distribution));
    const Distribution dist = error_distribution(parse_error_law(distribution));
    for (double t : taus) values.push_back(distribution_expectile(dist, AsymmetricPoint(t)));
  } else {
    std::istringstream in(read_file(c.input));
    const CsvTable table = read_csv(in);
    if (table.header.empty()) throw EmptyInput("expectile: input has no columns");
    source = !column.empty() ? column : (!c.response_col.empty() ? c.response_col : table.header[0]);
    const std::size_t idx = table.column(source);
    Eigen::VectorXd data(static_cast<Eigen::Index>(table.rows.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      data[static_cast<Eigen::Index>(r)] =
          parse_double(table.rows[r][idx], "row " + std::to_string(r + 2) + ", column '" + source + "'");
    }
    for (double t : taus) values.push_back(sample_expectile(data, AsymmetricPoint(t)));
  }

  std::ostringstream os;
  if (c.format == "json") {
    json doc;
    doc["command"] = "expectile";
    doc["source"] = source;
    json rows = json::array();
    for (std::size_t k = 0; k < taus.size(); ++k) rows.push_back({{"tau", taus[k]}, {"expectile", values[k]}});
    doc["expectiles"] = std::move(rows);
    os << doc.dump(2) << '\n';
  } else {
    os << "source,tau,expectile\n";
    for (std::size_t k = 0; k < taus.size(); ++k) {
      os << csv_escape(source) << ',' << format_number(taus[k]) << ',' << format_number(values[k]) << '\n';
    }
  }
  emit(c, os.str(), out);
  return kOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::vector<std::size_t> n{100};
  std::vector<std::size_t> m{5};
  std::vector<double> gamma{0.0};
  std::vector<std::string> dist{"gaussian"};
  std::size_t replications = 200;
  std::string dump;
};

double budget_from_env() {
  const char* raw = std::getenv("ERFE_MAX_BUDGET");
  if (raw == nullptr || *raw == '\0') return SimulationConfig{}.budget;
  const double b = parse_double(raw, "ERFE_MAX_BUDGET");
  if (!(b > 0.0)) throw UsageError("ERFE_MAX_BUDGET must be positive");
  return b;
}

json metrics_json(const ScenarioMetrics& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"tau", r.tau},
                    {"coefficient", r.coefficient},
                    {"true_value", num_or_null(r.true_value)},
                    {"mean_estimate", num_or_null(r.mean_estimate)},
                    {"bias", num_or_null(r.bias)},
                    {"sd", num_or_null(r.sd)},
                    {"mean_se", num_or_null(r.mean_se)},
                    {"se_sd_ratio", num_or_null(r.se_sd_ratio)},
                    {"median_iterations", num_or_null(r.median_iterations)},
                    {"replications", r.replications},
                    {"failures", r.failures}});
  }
  return {{"n", s.config.n},
          {"m", s.config.m},
          {"gamma", s.config.gamma},
          {"error_law", to_string(s.config.error_law)},
          {"joint", s.config.joint},
          {"rows", std::move(rows)}};
}

int cmd_simulate(const Common& c, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  SimulationConfig base;
  if (!c.taus.empty()) base.taus = c.taus;
  check_taus(base.taus);
  base.replications = a.replications;
  base.seed = c.seed;
  base.workers = c.workers;
  base.joint = c.joint;
  if (!c.v.empty()) base.v = Eigen::Map<const Eigen::VectorXd>(c.v.data(), static_cast<Eigen::Index>(c.v.size()));
  base.budget = budget_from_env();

  std::vector<SimulationConfig> cells;
  for (std::size_t n : a.n) {
    for (std::size_t m : a.m) {
      for (double g : a.gamma) {
        for (const auto& d : a.dist) {
          SimulationConfig cfg = base;
          cfg.n = n;
          cfg.m = m;
          cfg.gamma = g;
          cfg.error_law = parse_error_law(d);
          cfg.validate();
          const double size = static_cast<double>(n) * static_cast<double>(m) * static_cast<double>(a.replications);
          if (size > cfg.budget) {
            throw BudgetExceeded("simulation size n*m*replications = " + format_number(size) +
                                 " exceeds the budget " + format_number(cfg.budget) + " (ERFE_MAX_BUDGET)");
          }
          cells.push_back(std::move(cfg));
        }
      }
    }
  }

  std::ostringstream metrics_out;
  std::ostringstream dump_out;
  json doc;
  doc["command"] = "simulate";
  doc["seed"] = c.seed;
  doc["replications"] = a.replications;
  doc["scenarios"] = json::array();
  if (c.format == "csv") write_metrics_header(metrics_out);
  if (!a.dump.empty()) write_replications_header(dump_out);
  std::size_t failures = 0;
  for (const auto& cfg : cells) {
    const ScenarioMetrics s = run_monte_carlo(cfg);
    if (c.format == "csv") {
      write_metrics_rows(metrics_out, s);
    } else {
      doc["scenarios"].push_back(metrics_json(s));
    }
    if (!a.dump.empty()) write_replication_rows(dump_out, s);
    for (const auto& rep : s.replications) failures += rep.ok ? 0 : 1;
  }
  if (c.format == "json") metrics_out << doc.dump(2) << '\n';

  emit(c, metrics_out.str(), out);
  if (!a.dump.empty()) {
    std::ofstream file(a.dump, std::ios::binary);
    if (!file) throw ParseError("cannot write '" + a.dump + "'");
    file << dump_out.str();
  }
  if (failures > 0) {
    err << "warning: " << failures << " replication(s) failed or did not converge\n";
    return kNotConverged;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expectile regression with fixed effects for panel data"};
  app.name(args.empty() ? "erfe" : args.front());
  app.require_subcommand(1);

  Common c;
  bool ols = false;
  std::string column;
  std::string distribution;
  SimulateArgs sim;

  auto* fit = app.add_subcommand("fit", "Fit ERFE models to a CSV panel");
  add_panel_options(fit, c);
  fit->add_option("--tau", c.taus, "Asymmetric points, strictly increasing")->delimiter(',');
  fit->add_option("--v", c.v, "Influence weights for --joint (default: uniform)")->delimiter(',');
  fit->add_flag("--joint", c.joint, "Fit all asymmetric points jointly with one subject effect");
  fit->add_flag("--ols", ols, "Classical within (demeaned OLS) estimator");
  fit->add_option("--level", c.level, "Confidence level");
  fit->add_option("--max-iter", c.max_iter, "Iteration cap per fit")->check(CLI::PositiveNumber);
  add_io_options(fit, c);

  auto* transform = app.add_subcommand("transform", "Emit the tau-weighted within transform of a CSV panel");
  add_panel_options(transform, c);
  transform->add_option("--tau", c.taus, "Asymmetric point")->delimiter(',');
  transform->add_option("--max-iter", c.max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  add_io_options(transform, c);

  auto* expectile = app.add_subcommand("expectile", "Sample or distribution expectiles");
  expectile->add_option("--input", c.input, "CSV file");
  expectile->add_option("--column", column, "Column to summarise (default: first column)");
  expectile->add_option("--response-col", c.response_col, "Alias of --column");
  expectile->add_option("--distribution", distribution, "gaussian, student_t3 or chi2_3");
  expectile->add_option("--tau", c.taus, "Asymmetric points")->delimiter(',');
  add_io_options(expectile, c);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the ERFE estimator");
  simulate->add_option("--n", sim.n, "Subjects per panel")->delimiter(',');
  simulate->add_option("--m", sim.m, "Observations per subject")->delimiter(',');
  simulate->add_option("--gamma", sim.gamma, "Location-scale coefficient")->delimiter(',');
  simulate->add_option("--dist", sim.dist, "Error laws: gaussian, student_t3, chi2_3")->delimiter(',');
  simulate->add_option("--replications", sim.replications, "Replications per scenario");
  simulate->add_option("--tau", c.taus, "Asymmetric points")->delimiter(',');
  simulate->add_option("--v", c.v, "Influence weights for --joint")->delimiter(',');
  simulate->add_flag("--joint", c.joint, "Joint fit over all asymmetric points");
  simulate->add_option("--seed", c.seed, "Master seed");
  simulate->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--dump", sim.dump, "Write per-replication estimates to this CSV");
  add_io_options(simulate, c);

  // CLI11 consumes a reversed argument list without the program name.
  std::vector<std::string> rev;
  for (std::size_t k = args.size(); k > 1; --k) rev.push_back(args[k - 1]);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (fit->parsed()) return cmd_fit(c, ols, out, err);
    if (transform->parsed()) return cmd_transform(c, out, err);
    if (expectile->parsed()) return cmd_expectile(c, column, distribution, out);
    return cmd_simulate(c, sim, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace erfe::cli
