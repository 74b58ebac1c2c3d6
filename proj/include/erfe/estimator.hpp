#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "erfe/expectile.hpp"
#include "erfe/panel.hpp"
#include "erfe/within.hpp"

namespace erfe {

// Single-tau ERFE fit.
struct FitResult {
  double tau = 0.5;
  Eigen::VectorXd beta;            // p
  Eigen::VectorXd alpha;           // n, recovered subject effects
  Eigen::VectorXd residuals_star;  // N, y - X beta - Z alpha = M_Z(tau)(y - X beta)
  SubjectWeights weights;          // consistent with residuals_star
  int iterations = 0;
  bool converged = false;
  double objective_value = 0.0;    // sum of rho_tau(residuals_star)
};

// Joint fit over q asymmetric points sharing one subject effect.
struct MultiFitResult {
  std::vector<double> taus;
  Eigen::VectorXd v;
  Eigen::MatrixXd betas;      // p x q, column k is beta_{tau_k}
  Eigen::VectorXd alpha;      // n
  Eigen::MatrixXd residuals;  // N x q
  PooledSubjectWeights weights;
  int iterations = 0;
  bool converged = false;
  double objective_value = 0.0;  // sum_k v_k sum rho_{tau_k}

  // (beta_{tau_1}', ..., beta_{tau_q}')'
  Eigen::VectorXd stacked_beta() const;
};

// Classical within (demeaned OLS) estimator, reported as a tau = 0.5 fit.
FitResult within_ols(const PanelData& panel);

// Iterative within-transformation ERFE estimator for one asymmetric point.
// Throws SingularGram (with the failing iteration) and, unless
// config.require_convergence is false, NoConvergence.
FitResult fit_erfe_single(const PanelData& panel, AsymmetricPoint tau, const IrlsConfig& config = {});

// Joint ERFE estimator over strictly increasing taus with positive influence
// weights v. Throws NonincreasingTaus, WeightDimensionMismatch, SingularGram,
// NoConvergence.
MultiFitResult fit_erfe_multi(const PanelData& panel, std::span<const double> taus,
                              const Eigen::VectorXd& v, const IrlsConfig& config = {});

// alpha_i = sum_j w_ij (y_ij - x_ij' beta), i.e. Z alpha = P_Z(tau)(y - X beta).
Eigen::VectorXd recover_fixed_effects(const PanelData& panel, const Eigen::VectorXd& beta,
                                      const SubjectWeights& weights);

// Objective of the single-tau problem at (beta, alpha).
double erfe_objective(const PanelData& panel, const Eigen::VectorXd& beta,
                      const Eigen::VectorXd& alpha, AsymmetricPoint tau);

// Objective of the joint problem; betas is p x q.
double erfe_multi_objective(const PanelData& panel, const Eigen::MatrixXd& betas,
                            const Eigen::VectorXd& alpha, std::span<const double> taus,
                            const Eigen::VectorXd& v);

// Regressor columns that are constant within every subject (and therefore
// annihilated by any within transform).
std::vector<std::size_t> subject_constant_columns(const PanelData& panel, double rel_tol = 1e-10);

}  // namespace erfe
