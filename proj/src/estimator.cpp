#include "erfe/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pooled_gram.hpp"
#include "spd_solve.hpp"

namespace erfe {

namespace {

// Re-raise a solver failure with the offending regressor names attached.
[[noreturn]] void rethrow_named(const SingularGram& e, const PanelData& panel, std::size_t block_width) {
  std::string msg = e.what();
  std::vector<std::size_t> cols;
  for (std::size_t c : e.columns()) {
    const std::size_t j = block_width ? c % block_width : c;
    if (std::find(cols.begin(), cols.end(), j) == cols.end()) cols.push_back(j);
  }
  if (!cols.empty()) {
    msg += " (columns: ";
    for (std::size_t k = 0; k < cols.size(); ++k) msg += (k ? ", " : "") + panel.column_names()[cols[k]];
    msg += ")";
  }
  if (e.iteration() > 0) msg += " at iteration " + std::to_string(e.iteration());
  throw SingularGram(msg, std::move(cols), e.iteration());
}

bool same_sides(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a.array() > 0.0) == (b.array() > 0.0)).all();
}

void check_panel(const PanelData& panel) {
  if (panel.num_regressors() == 0) throw ShapeMismatch("panel has no regressors");
}

}  // namespace

Eigen::VectorXd MultiFitResult::stacked_beta() const {
  return Eigen::Map<const Eigen::VectorXd>(betas.data(), betas.size());
}

Eigen::VectorXd recover_fixed_effects(const PanelData& panel, const Eigen::VectorXd& beta,
                                      const SubjectWeights& weights) {
  const Eigen::VectorXd partial = panel.y() - panel.x() * beta;
  return subject_averages(Eigen::MatrixXd(partial), weights, panel).col(0);
}

double erfe_objective(const PanelData& panel, const Eigen::VectorXd& beta,
                      const Eigen::VectorXd& alpha, AsymmetricPoint tau) {
  Eigen::VectorXd e = panel.y() - panel.x() * beta;
  for (std::size_t r = 0; r < panel.num_obs(); ++r) {
    e[static_cast<Eigen::Index>(r)] -= alpha[static_cast<Eigen::Index>(panel.row_subject()[r])];
  }
  return asymmetric_risk(e, tau);
}

double erfe_multi_objective(const PanelData& panel, const Eigen::MatrixXd& betas,
                            const Eigen::VectorXd& alpha, std::span<const double> taus,
                            const Eigen::VectorXd& v) {
  double total = 0.0;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    total += v[kk] * erfe_objective(panel, betas.col(kk), alpha, AsymmetricPoint(taus[k]));
  }
  return total;
}

std::vector<std::size_t> subject_constant_columns(const PanelData& panel, double rel_tol) {
  const Eigen::MatrixXd demeaned = apply_within(panel.x(), uniform_weights(panel), panel);
  std::vector<std::size_t> out;
  for (Eigen::Index j = 0; j < panel.x().cols(); ++j) {
    const double scale = panel.x().col(j).lpNorm<Eigen::Infinity>();
    if (demeaned.col(j).lpNorm<Eigen::Infinity>() <= rel_tol * std::max(scale, 1.0)) {
      out.push_back(static_cast<std::size_t>(j));
    }
  }
  return out;
}

FitResult within_ols(const PanelData& panel) {
  check_panel(panel);
  const SubjectWeights w = uniform_weights(panel);
  const Eigen::MatrixXd xt = apply_within(panel.x(), w, panel);
  const Eigen::VectorXd yt = apply_within(panel.y(), w, panel);
  FitResult fit;
  fit.tau = 0.5;
  try {
    fit.beta = detail::solve_spd(xt.transpose() * xt, Eigen::VectorXd(xt.transpose() * yt),
                                 panel.x().colwise().squaredNorm().transpose(), 0, "within_ols");
  } catch (const SingularGram& e) {
    rethrow_named(e, panel, 0);
  }
  fit.residuals_star = yt - xt * fit.beta;
  fit.weights = w;
  fit.alpha = recover_fixed_effects(panel, fit.beta, w);
  fit.iterations = 1;
  fit.converged = true;
  fit.objective_value = asymmetric_risk(fit.residuals_star, AsymmetricPoint(0.5));
  return fit;
}

FitResult fit_erfe_single(const PanelData& panel, AsymmetricPoint tau, const IrlsConfig& config) {
  config.validate();
  check_panel(panel);
  const Eigen::VectorXd& y = panel.y();
  const Eigen::MatrixXd& x = panel.x();
  const Eigen::VectorXd ref_diag = x.colwise().squaredNorm().transpose();

  FitResult fit;
  fit.tau = tau.value();
  try {
    // Start: cross-sectional ER on classically demeaned data.
    const SubjectWeights w0 = uniform_weights(panel);
    const Eigen::MatrixXd x0 = apply_within(x, w0, panel);
    const Eigen::VectorXd y0 = apply_within(y, w0, panel);
    IrlsConfig start_cfg = config;
    start_cfg.require_convergence = false;
    fit.beta = expectile_regression(x0, y0, tau, start_cfg).beta;
    Eigen::VectorXd resid = y0 - x0 * fit.beta;

    const double grad_tol = config.tol_grad * (1.0 + y.lpNorm<Eigen::Infinity>());
    for (int it = 1; it <= config.max_iter; ++it) {
      // 1-3: weights from the current transformed residuals, re-transform (y, X).
      const SubjectWeights w = subject_weights(resid, tau, panel);
      const Eigen::VectorXd yt = apply_within(y, w, panel);
      const Eigen::MatrixXd xt = apply_within(x, w, panel);
      const Eigen::VectorXd et = yt - xt * fit.beta;
      // 4: weighted least-squares increment.
      const Eigen::MatrixXd gram = xt.transpose() * w.raw.asDiagonal() * xt;
      const Eigen::VectorXd score = xt.transpose() * (w.raw.array() * et.array()).matrix();
      const Eigen::VectorXd step =
          detail::solve_spd(gram, score, (ref_diag * std::min(tau.value(), 1.0 - tau.value())).eval(),
                            it, "fit_erfe_single");
      fit.beta += step;
      // 5: transformed residuals.
      const Eigen::VectorXd next = yt - xt * fit.beta;
      fit.iterations = it;
      const bool small_step = step.lpNorm<Eigen::Infinity>() <= config.tol;
      bool settled = false;
      if (small_step) {
        settled = same_sides(resid, next);
        if (!settled) {
          const SubjectWeights wn = subject_weights(next, tau, panel);
          const Eigen::VectorXd en = apply_within(Eigen::VectorXd(y - x * fit.beta), wn, panel);
          const Eigen::VectorXd grad =
              apply_within(x, wn, panel).transpose() * (wn.raw.array() * en.array()).matrix();
          settled = grad.lpNorm<Eigen::Infinity>() <= grad_tol;
        }
      }
      resid = next;
      if (settled) {
        fit.converged = true;
        break;
      }
    }
    fit.weights = subject_weights(resid, tau, panel);
  } catch (const SingularGram& e) {
    rethrow_named(e, panel, 0);
  }
  if (!fit.converged && config.require_convergence) {
    throw NoConvergence("fit_erfe_single: no convergence within " + std::to_string(config.max_iter) +
                            " iterations at tau=" + std::to_string(tau.value()),
                        config.max_iter);
  }
  fit.residuals_star = apply_within(Eigen::VectorXd(y - x * fit.beta), fit.weights, panel);
  fit.alpha = recover_fixed_effects(panel, fit.beta, fit.weights);
  fit.objective_value = asymmetric_risk(fit.residuals_star, tau);
  return fit;
}

namespace {

// Blocks y - X beta_k, one per asymmetric point.
std::vector<Eigen::MatrixXd> partial_residuals(const PanelData& panel, const Eigen::MatrixXd& betas) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(betas.cols()));
  for (Eigen::Index k = 0; k < betas.cols(); ++k) {
    out.emplace_back(panel.y() - panel.x() * betas.col(k));
  }
  return out;
}

Eigen::MatrixXd as_columns(const std::vector<Eigen::MatrixXd>& blocks) {
  Eigen::MatrixXd out(blocks.front().rows(), static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t k = 0; k < blocks.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = blocks[k].col(0);
  return out;
}

// Pooled-transformed residuals M_Z(taus)(1 (x) y - (I (x) X) beta), N x q.
Eigen::MatrixXd pooled_residuals(const PanelData& panel, const Eigen::MatrixXd& betas,
                                 const PooledSubjectWeights& pw) {
  const auto blocks = partial_residuals(panel, betas);
  return as_columns(apply_pooled_within(blocks, pw, panel));
}

// Per-block first-order conditions X' Psi_k e_k, stacked (pq).
Eigen::VectorXd block_scores(const PanelData& panel, const PooledSubjectWeights& pw,
                             const Eigen::MatrixXd& resid) {
  const Eigen::Index p = panel.x().cols();
  const Eigen::Index q = resid.cols();
  Eigen::VectorXd g(p * q);
  for (Eigen::Index k = 0; k < q; ++k) {
    g.segment(k * p, p) = panel.x().transpose() * (pw.raw.col(k).array() * resid.col(k).array()).matrix();
  }
  return g;
}

}  // namespace

MultiFitResult fit_erfe_multi(const PanelData& panel, std::span<const double> taus,
                              const Eigen::VectorXd& v, const IrlsConfig& config) {
  config.validate();
  check_panel(panel);
  if (taus.empty()) throw WeightDimensionMismatch("fit_erfe_multi: no asymmetric points");
  if (static_cast<std::size_t>(v.size()) != taus.size()) {
    throw WeightDimensionMismatch("fit_erfe_multi: v has " + std::to_string(v.size()) +
                                  " entries for " + std::to_string(taus.size()) + " asymmetric points");
  }
  for (std::size_t k = 0; k < taus.size(); ++k) {
    AsymmetricPoint check(taus[k]);
    (void)check;
    if (k > 0 && !(taus[k] > taus[k - 1])) {
      throw NonincreasingTaus("fit_erfe_multi: asymmetric points must be strictly increasing");
    }
  }
  if (!(v.array() > 0.0).all()) throw std::invalid_argument("influence weights must be strictly positive");

  const Eigen::MatrixXd& x = panel.x();
  const Eigen::VectorXd& y = panel.y();
  const auto q = static_cast<Eigen::Index>(taus.size());
  const Eigen::Index p = x.cols();
  const Eigen::VectorXd col_ss = x.colwise().squaredNorm().transpose();

  MultiFitResult fit;
  fit.taus.assign(taus.begin(), taus.end());
  fit.v = v;
  fit.betas.resize(p, q);
  try {
    const SubjectWeights w0 = uniform_weights(panel);
    const Eigen::MatrixXd x0 = apply_within(x, w0, panel);
    const Eigen::VectorXd y0 = apply_within(y, w0, panel);
    IrlsConfig start_cfg = config;
    start_cfg.require_convergence = false;
    Eigen::MatrixXd resid(y.size(), q);
    for (Eigen::Index k = 0; k < q; ++k) {
      fit.betas.col(k) = expectile_regression(x0, y0, AsymmetricPoint(taus[static_cast<std::size_t>(k)]),
                                              start_cfg).beta;
      resid.col(k) = y0 - x0 * fit.betas.col(k);
    }

    const double grad_tol = config.tol_grad * (1.0 + y.lpNorm<Eigen::Infinity>());
    for (int it = 1; it <= config.max_iter; ++it) {
      const PooledSubjectWeights pw = pooled_subject_weights(resid, taus, v, panel);
      // Residuals of the stacked problem under the refreshed projection.
      const Eigen::MatrixXd et = pooled_residuals(panel, fit.betas, pw);

      const Eigen::MatrixXd gram = detail::pooled_gram(panel, pw, detail::weighted_subject_sums(panel, pw));
      Eigen::VectorXd ref(p * q);
      for (Eigen::Index k = 0; k < q; ++k) {
        const double tk = taus[static_cast<std::size_t>(k)];
        ref.segment(k * p, p) = v[k] * std::min(tk, 1.0 - tk) * col_ss;
      }
      Eigen::VectorXd score = block_scores(panel, pw, et);
      for (Eigen::Index k = 0; k < q; ++k) score.segment(k * p, p) *= v[k];

      const Eigen::VectorXd step = detail::solve_spd(gram, score, ref, it, "fit_erfe_multi");
      fit.betas += Eigen::Map<const Eigen::MatrixXd>(step.data(), p, q);
      const Eigen::MatrixXd next = pooled_residuals(panel, fit.betas, pw);
      fit.iterations = it;

      bool settled = false;
      if (step.lpNorm<Eigen::Infinity>() <= config.tol) {
        settled = same_sides(resid, next);
        if (!settled) {
          const PooledSubjectWeights pn = pooled_subject_weights(next, taus, v, panel);
          const Eigen::MatrixXd en = pooled_residuals(panel, fit.betas, pn);
          settled = block_scores(panel, pn, en).lpNorm<Eigen::Infinity>() <= grad_tol;
        }
      }
      resid = next;
      if (settled) {
        fit.converged = true;
        break;
      }
    }
    fit.weights = pooled_subject_weights(resid, taus, v, panel);
  } catch (const SingularGram& e) {
    rethrow_named(e, panel, static_cast<std::size_t>(p));
  }
  if (!fit.converged && config.require_convergence) {
    throw NoConvergence("fit_erfe_multi: no convergence within " + std::to_string(config.max_iter) +
                            " iterations",
                        config.max_iter);
  }
  const auto blocks = partial_residuals(panel, fit.betas);
  fit.alpha = pooled_subject_averages(blocks, fit.weights, panel).col(0);
  fit.residuals = as_columns(apply_pooled_within(blocks, fit.weights, panel));
  fit.objective_value = erfe_multi_objective(panel, fit.betas, fit.alpha, taus, v);
  return fit;
}

}  // namespace erfe
