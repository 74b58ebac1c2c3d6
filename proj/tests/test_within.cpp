#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "erfe/within.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace erfe;
using testing_support::to_panel;

namespace {

Eigen::MatrixXd random_residuals(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd e(rows, cols);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = nd(rng);
  return e;
}

std::vector<Eigen::MatrixXd> split_blocks(const Eigen::VectorXd& stacked, Eigen::Index n_rows, Eigen::Index q) {
  std::vector<Eigen::MatrixXd> out;
  for (Eigen::Index k = 0; k < q; ++k) out.emplace_back(stacked.segment(k * n_rows, n_rows));
  return out;
}

}  // namespace

TEST_CASE("single within transform matches the dense annihilator") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 2 + trial % 3;
    const oracle::Panel op = oracle::random_panel(rng, n, m, 2);
    const PanelData panel = to_panel(op);
    const double tau = trial % 2 ? 0.2 : 0.85;
    const Eigen::VectorXd e = random_residuals(rng, op.rows(), 1).col(0);
    const SubjectWeights w = subject_weights(e, AsymmetricPoint(tau), panel);
    const Eigen::MatrixXd m_dense = oracle::annihilator(oracle::incidence(op), oracle::psi_vec(e, tau));
    CHECK((apply_within(panel.x(), w, panel) - m_dense * op.x).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((apply_within(panel.y(), w, panel) - m_dense * op.y).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("weights are normalized per subject") {
  std::mt19937_64 rng(32);
  const oracle::Panel op = oracle::random_panel(rng, 6, 4, 1, true);
  const PanelData panel = to_panel(op);
  const Eigen::VectorXd e = random_residuals(rng, op.rows(), 1).col(0);
  const SubjectWeights w = subject_weights(e, AsymmetricPoint(0.3), panel);
  for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
    const auto start = static_cast<Eigen::Index>(panel.offset(s));
    const auto len = static_cast<Eigen::Index>(panel.size(s));
    CHECK(std::abs(w.normalized.segment(start, len).sum() - 1.0) < 1e-14);
    CHECK(std::abs(w.raw.segment(start, len).sum() - w.subject_totals[static_cast<Eigen::Index>(s)]) < 1e-14);
  }
  CHECK_THROWS_AS(subject_weights(Eigen::VectorXd::Zero(3), AsymmetricPoint(0.3), panel), ShapeMismatch);
}

TEST_CASE("tau = 0.5 transform is hand demeaning") {
  Eigen::VectorXd y(5);
  y << 1.0, 3.0, 10.0, 20.0, 60.0;
  Eigen::MatrixXd x(5, 1);
  x << 2.0, 4.0, 1.0, 1.0, 4.0;
  const PanelData panel({"a", "a", "b", "b", "b"}, y, x, {});
  const SubjectWeights w = subject_weights(Eigen::VectorXd::Zero(5), AsymmetricPoint(0.5), panel);
  const Eigen::VectorXd yt = apply_within(panel.y(), w, panel);
  Eigen::VectorXd expect(5);
  expect << -1.0, 1.0, -20.0, -10.0, 30.0;
  CHECK((yt - expect).lpNorm<Eigen::Infinity>() < 1e-13);
  const Eigen::MatrixXd xt = apply_within(panel.x(), uniform_weights(panel), panel);
  CHECK(std::abs(xt(0, 0) + 1.0) < 1e-14);
  CHECK(std::abs(xt(4, 0) - 2.0) < 1e-14);
}

TEST_CASE("within transform annihilates subject-constant columns and is idempotent") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const oracle::Panel op = oracle::random_panel(rng, 5, 3, 2, true);
    const PanelData panel = to_panel(op);
    const Eigen::VectorXd e = random_residuals(rng, op.rows(), 1).col(0);
    const SubjectWeights w = subject_weights(e, AsymmetricPoint(trial % 2 ? 0.1 : 0.7), panel);
    Eigen::VectorXd constant(op.rows());
    for (int r = 0; r < op.rows(); ++r) constant[r] = 3.7 * op.subject[static_cast<std::size_t>(r)] - 11.0;
    CHECK(apply_within(constant, w, panel).lpNorm<Eigen::Infinity>() <= 1e-12);
    const Eigen::MatrixXd once = apply_within(panel.x(), w, panel);
    const Eigen::MatrixXd twice = apply_within(once, w, panel);
    CHECK((twice - once).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("pooled transform matches the dense pooled annihilator") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> vw(0.2, 3.0);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 2 + trial % 3;
    const int q = 1 + trial % 2;
    const oracle::Panel op = oracle::random_panel(rng, n, m, 2);
    const PanelData panel = to_panel(op);
    std::vector<double> taus = q == 1 ? std::vector<double>{0.3} : std::vector<double>{0.25, 0.8};
    Eigen::VectorXd v(q);
    for (int k = 0; k < q; ++k) v[k] = vw(rng);
    const Eigen::MatrixXd e = random_residuals(rng, op.rows(), q);
    const PooledSubjectWeights pw = pooled_subject_weights(e, taus, v, panel);

    Eigen::MatrixXd psi(op.rows(), q);
    for (int k = 0; k < q; ++k) psi.col(k) = oracle::psi_vec(e.col(k), taus[static_cast<std::size_t>(k)]);
    const Eigen::MatrixXd z = oracle::incidence(op);
    const Eigen::MatrixXd m_foc = oracle::pooled_annihilator(z, psi, v, false);

    Eigen::VectorXd stacked(op.rows() * q);
    for (int k = 0; k < q; ++k) stacked.segment(k * op.rows(), op.rows()) = op.y + (k + 1.0) * op.x.col(0);
    const auto blocks = split_blocks(stacked, op.rows(), q);
    const auto out = apply_pooled_within(blocks, pw, panel);
    const Eigen::VectorXd expect = m_foc * stacked;
    for (int k = 0; k < q; ++k) {
      CHECK((out[static_cast<std::size_t>(k)].col(0) - expect.segment(k * op.rows(), op.rows())).lpNorm<Eigen::Infinity>() <
            1e-10);
    }
  }
}

TEST_CASE("pooled transform equals the verbatim projection when influence weights are uniform") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 30; ++trial) {
    const oracle::Panel op = oracle::random_panel(rng, 3, 4, 1);
    const PanelData panel = to_panel(op);
    const std::vector<double> taus{0.2, 0.9};
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(2, 0.5 + trial * 0.1);
    const Eigen::MatrixXd e = random_residuals(rng, op.rows(), 2);
    const PooledSubjectWeights pw = pooled_subject_weights(e, taus, v, panel);
    Eigen::MatrixXd psi(op.rows(), 2);
    for (int k = 0; k < 2; ++k) psi.col(k) = oracle::psi_vec(e.col(k), taus[static_cast<std::size_t>(k)]);
    const Eigen::MatrixXd m_verbatim = oracle::pooled_annihilator(oracle::incidence(op), psi, v, true);
    Eigen::VectorXd stacked(2 * op.rows());
    stacked << op.y, op.x.col(0);
    const auto out = apply_pooled_within(split_blocks(stacked, op.rows(), 2), pw, panel);
    const Eigen::VectorXd expect = m_verbatim * stacked;
    CHECK((out[0].col(0) - expect.head(op.rows())).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((out[1].col(0) - expect.tail(op.rows())).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("verbatim pooled projection with unequal influence weights does not annihilate subject effects") {
  std::mt19937_64 rng(36);
  const oracle::Panel op = oracle::random_panel(rng, 2, 3, 1);
  const std::vector<double> taus{0.2, 0.9};
  Eigen::VectorXd v(2);
  v << 1.0, 3.0;
  const Eigen::MatrixXd e = random_residuals(rng, op.rows(), 2);
  Eigen::MatrixXd psi(op.rows(), 2);
  for (int k = 0; k < 2; ++k) psi.col(k) = oracle::psi_vec(e.col(k), taus[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXd z = oracle::incidence(op);
  Eigen::MatrixXd one_z(2 * op.rows(), op.n);
  one_z << z, z;
  const Eigen::MatrixXd m_verbatim = oracle::pooled_annihilator(z, psi, v, true);
  const Eigen::MatrixXd m_foc = oracle::pooled_annihilator(z, psi, v, false);
  CHECK((m_verbatim * one_z).lpNorm<Eigen::Infinity>() > 1e-3);
  CHECK((m_foc * one_z).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("pooled weights: normalization, annihilation, idempotency") {
  std::mt19937_64 rng(37);
  const std::vector<double> taus{0.1, 0.5, 0.9};
  Eigen::VectorXd v(3);
  v << 0.2, 1.0, 2.5;
  for (int trial = 0; trial < 50; ++trial) {
    const oracle::Panel op = oracle::random_panel(rng, 4, 3, 2, true);
    const PanelData panel = to_panel(op);
    const Eigen::MatrixXd e = random_residuals(rng, op.rows(), 3);
    const PooledSubjectWeights pw = pooled_subject_weights(e, taus, v, panel);
    for (std::size_t s = 0; s < panel.num_subjects(); ++s) {
      const auto start = static_cast<Eigen::Index>(panel.offset(s));
      const auto len = static_cast<Eigen::Index>(panel.size(s));
      CHECK(std::abs(pw.normalized.middleRows(start, len).sum() - 1.0) < 1e-14);
    }
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<Eigen::MatrixXd> constant;
    for (int k = 0; k < 3; ++k) {
      blocks.push_back(panel.x() * (k + 1.0));
      Eigen::MatrixXd c(op.rows(), 1);
      for (int r = 0; r < op.rows(); ++r) c(r, 0) = 5.0 - 2.0 * static_cast<double>(panel.row_subject()[static_cast<std::size_t>(r)]);
      constant.push_back(c);
    }
    for (const auto& b : apply_pooled_within(constant, pw, panel)) CHECK(b.lpNorm<Eigen::Infinity>() <= 1e-12);
    const auto once = apply_pooled_within(blocks, pw, panel);
    const auto twice = apply_pooled_within(once, pw, panel);
    for (int k = 0; k < 3; ++k) {
      CHECK((twice[static_cast<std::size_t>(k)] - once[static_cast<std::size_t>(k)]).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("single-block pooled transform equals the single transform") {
  std::mt19937_64 rng(38);
  const oracle::Panel op = oracle::random_panel(rng, 5, 4, 2, true);
  const PanelData panel = to_panel(op);
  const Eigen::MatrixXd e = random_residuals(rng, op.rows(), 1);
  const std::vector<double> taus{0.35};
  const PooledSubjectWeights pw = pooled_subject_weights(e, taus, Eigen::VectorXd::Constant(1, 2.0), panel);
  const SubjectWeights w = subject_weights(e.col(0), AsymmetricPoint(0.35), panel);
  const std::vector<Eigen::MatrixXd> blocks{panel.x()};
  CHECK((apply_pooled_within(blocks, pw, panel)[0] - apply_within(panel.x(), w, panel)).lpNorm<Eigen::Infinity>() <
        1e-14);
}

TEST_CASE("pooled weight validation") {
  std::mt19937_64 rng(39);
  const oracle::Panel op = oracle::random_panel(rng, 2, 3, 1);
  const PanelData panel = to_panel(op);
  const Eigen::MatrixXd e = random_residuals(rng, op.rows(), 2);
  const std::vector<double> taus{0.2, 0.8};
  CHECK_THROWS_AS(pooled_subject_weights(e, taus, Eigen::VectorXd::Ones(3), panel), WeightDimensionMismatch);
  CHECK_THROWS_AS(pooled_subject_weights(e.leftCols(1), taus, Eigen::VectorXd::Ones(2), panel),
                  WeightDimensionMismatch);
  Eigen::VectorXd bad(2);
  bad << 1.0, 0.0;
  CHECK_THROWS_AS(pooled_subject_weights(e, taus, bad, panel), std::invalid_argument);
}
