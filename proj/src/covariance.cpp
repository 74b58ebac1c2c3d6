#include "erfe/covariance.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <string>

#include "pooled_gram.hpp"

namespace erfe {

namespace {

// scores: one row per subject (the cluster score g_i), gram: unnormalised bread.
SandwichCovariance assemble(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& gram, double n_obs) {
  SandwichCovariance cov;
  cov.d0_hat = Eigen::MatrixXd::Zero(scores.cols(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    cov.d0_hat.noalias() += scores.row(i).transpose() * scores.row(i);
  }
  cov.d0_hat /= n_obs;
  cov.d1_hat = gram / n_obs;

  const Eigen::LLT<Eigen::MatrixXd> llt(cov.d1_hat);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    throw SingularBread("sandwich: D1 is not invertible");
  }
  const Eigen::MatrixXd bread_inv = llt.solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
  Eigen::MatrixXd vc = bread_inv * cov.d0_hat * bread_inv / n_obs;
  cov.vc = 0.5 * (vc + vc.transpose());

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.vc, Eigen::EigenvaluesOnly);
  const double trace = cov.vc.trace();
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::abs(trace)) {
    throw NotPositiveSemidefinite("sandwich: variance matrix has eigenvalue " +
                                  std::to_string(eig.eigenvalues().minCoeff()));
  }
  cov.se = cov.vc.diagonal().cwiseMax(0.0).cwiseSqrt();
  return cov;
}

}  // namespace

SandwichCovariance sandwich_single(const PanelData& panel, const FitResult& fit) {
  if (static_cast<std::size_t>(fit.residuals_star.size()) != panel.num_obs() ||
      static_cast<std::size_t>(fit.beta.size()) != panel.num_regressors()) {
    throw ShapeMismatch("sandwich_single: fit does not belong to this panel");
  }
  const SubjectWeights w = subject_weights(fit.residuals_star, AsymmetricPoint(fit.tau), panel);
  const Eigen::MatrixXd xt = apply_within(panel.x(), w, panel);
  const Eigen::VectorXd psi_e = (w.raw.array() * fit.residuals_star.array()).matrix();

  Eigen::MatrixXd scores(static_cast<Eigen::Index>(panel.num_subjects()), xt.cols());
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    scores.row(static_cast<Eigen::Index>(s)) =
        psi_e.segment(start, len).transpose() * xt.middleRows(start, len);
  }
  const Eigen::MatrixXd gram = xt.transpose() * w.raw.asDiagonal() * xt;
  return assemble(scores, gram, static_cast<double>(panel.num_obs()));
}

SandwichCovariance sandwich_multi(const PanelData& panel, const MultiFitResult& fit) {
  const auto q = static_cast<Eigen::Index>(fit.taus.size());
  const Eigen::Index p = panel.x().cols();
  if (fit.residuals.cols() != q || static_cast<std::size_t>(fit.residuals.rows()) != panel.num_obs() ||
      fit.betas.rows() != p) {
    throw ShapeMismatch("sandwich_multi: fit does not belong to this panel");
  }
  const PooledSubjectWeights pw = pooled_subject_weights(fit.residuals, fit.taus, fit.v, panel);
  const auto sums = detail::weighted_subject_sums(panel, pw);
  const Eigen::MatrixXd gram = detail::pooled_gram(panel, pw, sums);

  // Subject-i score of the concentrated design:
  //   g_ik = v_k sum_j psi_k e_ijk x_ij - (v_k s_ik / D_i) sum_l v_l sum_j psi_l e_ijl.
  const Eigen::MatrixXd psi_e = (pw.raw.array() * fit.residuals.array()).matrix();
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(panel.num_subjects()), p * q);
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    double pooled = 0.0;
    for (Eigen::Index l = 0; l < q; ++l) pooled += fit.v[l] * psi_e.col(l).segment(start, len).sum();
    for (Eigen::Index k = 0; k < q; ++k) {
      const Eigen::RowVectorXd direct =
          psi_e.col(k).segment(start, len).transpose() * panel.x().middleRows(start, len);
      scores.row(i).segment(k * p, p) =
          fit.v[k] * direct - (fit.v[k] / pw.normalizers[i]) * pooled * sums[static_cast<std::size_t>(k)].row(i);
    }
  }
  return assemble(scores, gram, static_cast<double>(panel.num_obs()));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::vector<Interval> conf_intervals(const Eigen::VectorXd& beta, const SandwichCovariance& cov,
                                     double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  if (cov.se.size() != beta.size()) throw ShapeMismatch("conf_intervals: beta and se lengths differ");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(beta.size()));
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    out.push_back({beta[k] - z * cov.se[k], beta[k] + z * cov.se[k]});
  }
  return out;
}

}  // namespace erfe
