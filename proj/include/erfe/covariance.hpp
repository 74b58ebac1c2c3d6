#pragma once

#include <Eigen/Dense>

#include <vector>

#include "erfe/estimator.hpp"

namespace erfe {

// Robust sandwich D1^{-1} D0 D1^{-1}. Both D matrices carry the 1/(nm)
// normalisation of sqrt(nm)(beta_hat - beta), so the variance of beta_hat
// itself is the sandwich divided by nm (N for unbalanced panels). No
// degrees-of-freedom correction is applied.
struct SandwichCovariance {
  Eigen::MatrixXd d0_hat;  // subject-clustered meat
  Eigen::MatrixXd d1_hat;  // weighted Gram bread
  Eigen::MatrixXd vc;      // variance matrix of beta_hat
  Eigen::VectorXd se;      // sqrt(diag(vc))
};

// Single-tau sandwich:
//   D0 = (nm)^{-1} sum_i X*_i' Psi e*_i e*_i' Psi X*_i,
//   D1 = (nm)^{-1} sum_i X*_i' Psi X*_i.
SandwichCovariance sandwich_single(const PanelData& panel, const FitResult& fit);

// Joint sandwich over q asymmetric points (pq x pq, blocks ordered by tau).
// The meat clusters per subject across all blocks, so its (k, j) block is
// sum_i g_ik g_ij' with g_ik the subject-i score of beta_{tau_k}; the bread is
// the Gram of the concentrated design under weights V (x) Psi.
SandwichCovariance sandwich_multi(const PanelData& panel, const MultiFitResult& fit);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Standard normal quantile.
double normal_quantile(double p);

// beta_k +/- z_{(1 + level)/2} se_k.
std::vector<Interval> conf_intervals(const Eigen::VectorXd& beta, const SandwichCovariance& cov,
                                     double level);

}  // namespace erfe
