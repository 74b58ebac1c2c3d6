#include "spd_solve.hpp"

#include <cmath>
#include <vector>

#include "erfe/error.hpp"

namespace erfe::detail {

namespace {
constexpr double kCollapsed = 1e-12;
constexpr double kMinRcond = 1e-12;
}  // namespace

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs,
                          const Eigen::VectorXd& reference_diag, int iteration,
                          const std::string& what) {
  const Eigen::Index p = gram.rows();
  if (gram.cols() != p || rhs.rows() != p || reference_diag.size() != p) {
    throw ShapeMismatch(what + ": inconsistent system dimensions");
  }
  Eigen::VectorXd scale(p);
  std::vector<std::size_t> collapsed;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double ref = reference_diag[j] > 0.0 ? reference_diag[j] : gram(j, j);
    if (!(ref > 0.0) || !(gram(j, j) > kCollapsed * ref)) {
      collapsed.push_back(static_cast<std::size_t>(j));
      scale[j] = 1.0;
    } else {
      scale[j] = 1.0 / std::sqrt(ref);
    }
  }
  if (!collapsed.empty()) {
    throw SingularGram(what + ": weighted Gram matrix is singular", std::move(collapsed), iteration);
  }
  const Eigen::MatrixXd scaled = scale.asDiagonal() * gram * scale.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(scaled);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kMinRcond)) {
    // Columns loading on the near-null direction are the collinear ones.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
    const Eigen::VectorXd null_dir = eig.eigenvectors().col(0).cwiseAbs();
    const double top = null_dir.maxCoeff();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (null_dir[j] >= 0.1 * top) collapsed.push_back(static_cast<std::size_t>(j));
    }
    throw SingularGram(what + ": weighted Gram matrix is not positive definite", std::move(collapsed), iteration);
  }
  return scale.asDiagonal() * llt.solve(scale.asDiagonal() * rhs);
}

}  // namespace erfe::detail
