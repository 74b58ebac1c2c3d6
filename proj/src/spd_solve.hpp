#pragma once

#include <Eigen/Dense>

#include <string>

namespace erfe::detail {

// Cholesky solve of gram * out = rhs after symmetric diagonal scaling.
// `reference_diag` supplies the per-column scale the gram diagonal is judged
// against: a column whose scaled diagonal falls below 1e-12 is reported as
// collapsed. Throws SingularGram when the scaled matrix is not numerically
// positive definite (reciprocal condition below 1e-12).
Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs,
                          const Eigen::VectorXd& reference_diag, int iteration,
                          const std::string& what);

inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                 const Eigen::VectorXd& reference_diag, int iteration,
                                 const std::string& what) {
  return solve_spd(gram, Eigen::MatrixXd(rhs), reference_diag, iteration, what).col(0);
}

}  // namespace erfe::detail
