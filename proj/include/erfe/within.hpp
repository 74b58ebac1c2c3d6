#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "erfe/panel.hpp"

namespace erfe {

// Per-observation weights psi(e_ij) / sum_k psi(e_ik), renormalized so every
// subject's weights sum to one. These are the nonzero entries of the weighted
// projection P_Z(tau) = Z (Z' Psi Z)^{-1} Z' Psi.
struct SubjectWeights {
  double tau = 0.5;
  Eigen::VectorXd raw;             // psi_tau at the residuals, length N
  Eigen::VectorXd normalized;      // length N
  Eigen::VectorXd subject_totals;  // sum of raw psi per subject, length n
};

SubjectWeights subject_weights(const Eigen::VectorXd& residuals, AsymmetricPoint tau,
                               const PanelData& panel);

// Weighted subject averages sum_j w_ij v_ij (one row per subject).
Eigen::MatrixXd subject_averages(const Eigen::MatrixXd& values, const SubjectWeights& w,
                                 const PanelData& panel);

// M_Z(tau) v: subtracts the weighted subject average from every observation.
// Applied column-wise to matrices. Throws ShapeMismatch.
Eigen::MatrixXd apply_within(const Eigen::MatrixXd& values, const SubjectWeights& w,
                             const PanelData& panel);
Eigen::VectorXd apply_within(const Eigen::VectorXd& values, const SubjectWeights& w,
                             const PanelData& panel);

// Classical demeaning weights (tau = 0.5: psi is constant).
SubjectWeights uniform_weights(const PanelData& panel);

// Pooled weights for a sequence of asymmetric points sharing one subject
// effect. For block k, observation j of subject i:
//   omega_ijk = v_k psi_k(e_ijk) / D_i,   D_i = sum_k v_k sum_j psi_k(e_ijk),
// so the pooled projection subtracts the common average
//   a_i = sum_k sum_j omega_ijk u_ijk
// from every block.
struct PooledSubjectWeights {
  std::vector<double> taus;
  Eigen::VectorXd v;            // influence weights, length q
  Eigen::MatrixXd raw;          // psi_{tau_k} values, N x q
  Eigen::MatrixXd normalized;   // omega, N x q; sums to one over (j, k) per subject
  Eigen::VectorXd normalizers;  // D_i, length n

  std::size_t num_blocks() const noexcept { return taus.size(); }
};

// `residuals` is N x q: column k holds the block-k residuals.
// Throws WeightDimensionMismatch.
PooledSubjectWeights pooled_subject_weights(const Eigen::MatrixXd& residuals,
                                            std::span<const double> taus,
                                            const Eigen::VectorXd& v, const PanelData& panel);

// Pooled subject averages a_i of stacked inputs; blocks[k] is N x c.
Eigen::MatrixXd pooled_subject_averages(std::span<const Eigen::MatrixXd> blocks,
                                        const PooledSubjectWeights& pw, const PanelData& panel);

// M_Z(taus) applied to q stacked blocks of equal shape (N x c each).
std::vector<Eigen::MatrixXd> apply_pooled_within(std::span<const Eigen::MatrixXd> blocks,
                                                 const PooledSubjectWeights& pw,
                                                 const PanelData& panel);

}  // namespace erfe
