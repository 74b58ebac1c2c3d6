#include "erfe/within.hpp"

#include <string>

namespace erfe {

namespace {

void check_rows(Eigen::Index rows, const PanelData& panel, const char* what) {
  if (static_cast<std::size_t>(rows) != panel.num_obs()) {
    throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(panel.num_obs()) +
                        " rows, got " + std::to_string(rows));
  }
}

}  // namespace

SubjectWeights subject_weights(const Eigen::VectorXd& residuals, AsymmetricPoint tau,
                               const PanelData& panel) {
  check_rows(residuals.size(), panel, "subject_weights");
  SubjectWeights w;
  w.tau = tau.value();
  w.raw = check_weights(residuals, tau);
  w.normalized.resize(w.raw.size());
  w.subject_totals.resize(static_cast<Eigen::Index>(panel.num_subjects()));
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    const double total = w.raw.segment(start, len).sum();
    w.subject_totals[static_cast<Eigen::Index>(s)] = total;
    auto seg = w.normalized.segment(start, len);
    seg = w.raw.segment(start, len) / total;
    seg /= seg.sum();
  }
  return w;
}

SubjectWeights uniform_weights(const PanelData& panel) {
  return subject_weights(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(panel.num_obs())),
                         AsymmetricPoint(0.5), panel);
}

Eigen::MatrixXd subject_averages(const Eigen::MatrixXd& values, const SubjectWeights& w,
                                 const PanelData& panel) {
  check_rows(values.rows(), panel, "subject_averages");
  check_rows(w.normalized.size(), panel, "subject_averages (weights)");
  Eigen::MatrixXd avg(static_cast<Eigen::Index>(panel.num_subjects()), values.cols());
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    avg.row(static_cast<Eigen::Index>(s)) =
        w.normalized.segment(start, len).transpose() * values.middleRows(start, len);
  }
  return avg;
}

Eigen::MatrixXd apply_within(const Eigen::MatrixXd& values, const SubjectWeights& w,
                             const PanelData& panel) {
  const Eigen::MatrixXd avg = subject_averages(values, w, panel);
  Eigen::MatrixXd out = values;
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    out.middleRows(start, len).rowwise() -= avg.row(static_cast<Eigen::Index>(s));
  }
  return out;
}

Eigen::VectorXd apply_within(const Eigen::VectorXd& values, const SubjectWeights& w,
                             const PanelData& panel) {
  return apply_within(Eigen::MatrixXd(values), w, panel).col(0);
}

PooledSubjectWeights pooled_subject_weights(const Eigen::MatrixXd& residuals,
                                            std::span<const double> taus, const Eigen::VectorXd& v,
                                            const PanelData& panel) {
  const auto q = static_cast<Eigen::Index>(taus.size());
  if (q == 0) throw WeightDimensionMismatch("pooled_subject_weights: no asymmetric points");
  if (v.size() != q || residuals.cols() != q) {
    throw WeightDimensionMismatch("pooled_subject_weights: taus, v and residual blocks disagree (q=" +
                                  std::to_string(q) + ", v=" + std::to_string(v.size()) +
                                  ", blocks=" + std::to_string(residuals.cols()) + ")");
  }
  if (static_cast<std::size_t>(residuals.rows()) != panel.num_obs()) {
    throw WeightDimensionMismatch("pooled_subject_weights: residual blocks have wrong length");
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    if (!(v[k] > 0.0)) throw std::invalid_argument("influence weights must be strictly positive");
  }

  PooledSubjectWeights pw;
  pw.taus.assign(taus.begin(), taus.end());
  pw.v = v;
  pw.raw.resize(residuals.rows(), q);
  for (Eigen::Index k = 0; k < q; ++k) {
    pw.raw.col(k) = check_weights(residuals.col(k), AsymmetricPoint(taus[static_cast<std::size_t>(k)]));
  }
  pw.normalized.resize(residuals.rows(), q);
  pw.normalizers.resize(static_cast<Eigen::Index>(panel.num_subjects()));
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    const auto raw = pw.raw.middleRows(start, len);
    double total = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) total += v[k] * raw.col(k).sum();
    pw.normalizers[static_cast<Eigen::Index>(s)] = total;
    auto block = pw.normalized.middleRows(start, len);
    block = (raw.array().rowwise() * v.transpose().array()) / total;
    block /= block.sum();
  }
  return pw;
}

Eigen::MatrixXd pooled_subject_averages(std::span<const Eigen::MatrixXd> blocks,
                                        const PooledSubjectWeights& pw, const PanelData& panel) {
  if (blocks.size() != pw.num_blocks()) {
    throw WeightDimensionMismatch("pooled transform: expected " + std::to_string(pw.num_blocks()) +
                                  " blocks, got " + std::to_string(blocks.size()));
  }
  const Eigen::Index cols = blocks.front().cols();
  for (const auto& b : blocks) {
    check_rows(b.rows(), panel, "apply_pooled_within");
    if (b.cols() != cols) throw ShapeMismatch("apply_pooled_within: blocks differ in width");
  }
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(panel.num_subjects()), cols);
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      avg.row(static_cast<Eigen::Index>(s)) +=
          pw.normalized.col(static_cast<Eigen::Index>(k)).segment(start, len).transpose() *
          blocks[k].middleRows(start, len);
    }
  }
  return avg;
}

std::vector<Eigen::MatrixXd> apply_pooled_within(std::span<const Eigen::MatrixXd> blocks,
                                                 const PooledSubjectWeights& pw,
                                                 const PanelData& panel) {
  const Eigen::MatrixXd avg = pooled_subject_averages(blocks, pw, panel);
  std::vector<Eigen::MatrixXd> out(blocks.begin(), blocks.end());
  for (auto& b : out) {
    for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
      const auto start = static_cast<Eigen::Index>(panel.offset(s));
      const auto len = static_cast<Eigen::Index>(panel.size(s));
      b.middleRows(start, len).rowwise() -= avg.row(static_cast<Eigen::Index>(s));
    }
  }
  return out;
}

}  // namespace erfe
