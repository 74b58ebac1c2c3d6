#include "pooled_gram.hpp"

namespace erfe::detail {

std::vector<Eigen::MatrixXd> weighted_subject_sums(const PanelData& panel, const PooledSubjectWeights& pw) {
  const Eigen::MatrixXd& x = panel.x();
  const auto n = static_cast<Eigen::Index>(panel.num_subjects());
  std::vector<Eigen::MatrixXd> sums;
  sums.reserve(pw.num_blocks());
  for (Eigen::Index k = 0; k < pw.raw.cols(); ++k) {
    Eigen::MatrixXd s_k(n, x.cols());
    for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
      const auto start = static_cast<Eigen::Index>(panel.offset(s));
      const auto len = static_cast<Eigen::Index>(panel.size(s));
      s_k.row(static_cast<Eigen::Index>(s)) =
          pw.raw.col(k).segment(start, len).transpose() * x.middleRows(start, len);
    }
    sums.push_back(std::move(s_k));
  }
  return sums;
}

Eigen::MatrixXd pooled_gram(const PanelData& panel, const PooledSubjectWeights& pw,
                            const std::vector<Eigen::MatrixXd>& sums) {
  const Eigen::MatrixXd& x = panel.x();
  const Eigen::Index p = x.cols();
  const auto q = static_cast<Eigen::Index>(pw.num_blocks());
  const Eigen::VectorXd inv_d = pw.normalizers.cwiseInverse();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p * q, p * q);
  for (Eigen::Index k = 0; k < q; ++k) {
    const auto& s_k = sums[static_cast<std::size_t>(k)];
    gram.block(k * p, k * p, p, p) += pw.v[k] * (x.transpose() * pw.raw.col(k).asDiagonal() * x);
    for (Eigen::Index l = 0; l <= k; ++l) {
      const auto& s_l = sums[static_cast<std::size_t>(l)];
      const Eigen::MatrixXd cross = pw.v[k] * pw.v[l] * (s_k.transpose() * inv_d.asDiagonal() * s_l);
      gram.block(k * p, l * p, p, p) -= cross;
      if (l != k) gram.block(l * p, k * p, p, p) -= cross.transpose();
    }
  }
  return 0.5 * (gram + gram.transpose());
}

}  // namespace erfe::detail
