#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerical code: projections are built as dense
// matrices, minimizers come from generic optimizers on the raw objective,
// and distributional quantities use closed forms.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double psi(double t, double tau) { return t > 0.0 ? tau : 1.0 - tau; }
inline double rho(double t, double tau) { return psi(t, tau) * t * t; }

// ---- scalar ---------------------------------------------------------------

inline double golden_section(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Sample expectile as the minimizer of sum rho_tau(y - theta).
inline double expectile_by_search(const VectorXd& y, double tau) {
  const auto f = [&](double th) {
    double s = 0.0;
    for (double v : y) s += rho(v - th, tau);
    return s;
  };
  return golden_section(f, y.minCoeff(), y.maxCoeff());
}

// Closed-form sample expectile: on each gap between sorted points the first
// order condition is linear in theta, so scan gaps for the root.
inline double expectile_by_enumeration(const VectorXd& y, double tau) {
  std::vector<double> s(y.begin(), y.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  for (std::size_t k = 0; k + 1 <= n; ++k) {
    // theta in [s[k], s[k+1]]: points <= k are below or at theta.
    double wl = 0.0, sl = 0.0, wu = 0.0, su = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i <= k) {
        wl += 1.0 - tau;
        sl += (1.0 - tau) * s[i];
      } else {
        wu += tau;
        su += tau * s[i];
      }
    }
    const double th = (sl + su) / (wl + wu);
    const double hi = k + 1 < n ? s[k + 1] : s[k];
    if (th >= s[k] - 1e-15 && th <= hi + 1e-15) return th;
  }
  return s.front();
}

// ---- normal / t / chi-square closed forms ---------------------------------

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Normal quantile by bisection on the erf-based CDF.
inline double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (Phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Moments {
  double upper;  // E(X - theta)_+
  double lower;  // E(theta - X)_+
};

inline Moments gaussian_moments(double mean, double sd, double theta) {
  const double z = (theta - mean) / sd;
  const double upper = sd * (phi(z) - z * (1.0 - Phi(z)));
  return {upper, upper + theta - mean};
}

// Student t with 3 degrees of freedom.
inline double t3_pdf(double x) {
  return 2.0 / (std::numbers::pi * std::sqrt(3.0) * std::pow(1.0 + x * x / 3.0, 2));
}
inline double t3_cdf(double x) {
  const double u = x / std::sqrt(3.0);
  return 0.5 + (u / (1.0 + u * u) + std::atan(u)) / std::numbers::pi;
}
inline Moments t3_moments(double theta) {
  const double nu = 3.0;
  const double upper = (nu + theta * theta) / (nu - 1.0) * t3_pdf(theta) - theta * (1.0 - t3_cdf(theta));
  return {upper, upper + theta};
}

// Chi-square with 3 degrees of freedom; uses
// E[X 1(X > c)] = k P(chi2_{k+2} > c).
inline double chi2_3_survival(double c) {
  return std::erfc(std::sqrt(c / 2.0)) + std::sqrt(2.0 * c / std::numbers::pi) * std::exp(-c / 2.0);
}
inline double chi2_5_survival(double c) {
  return chi2_3_survival(c) + std::pow(c / 2.0, 1.5) * std::exp(-c / 2.0) / std::tgamma(2.5);
}
inline Moments chi2_3_moments(double theta) {
  if (theta <= 0.0) return {3.0 - theta, 0.0};
  const double upper = 3.0 * chi2_5_survival(theta) - theta * chi2_3_survival(theta);
  return {upper, upper + theta - 3.0};
}

inline double expectile_from_moments(const std::function<Moments(double)>& pm, double tau, double lo,
                                     double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const Moments m = pm(mid);
    (tau * m.upper - (1.0 - tau) * m.lower > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---- dense panel algebra ---------------------------------------------------

// Small panel in the natural (already grouped) order.
struct Panel {
  std::vector<int> subject;  // subject index of each row, nondecreasing
  int n = 0;
  VectorXd y;
  MatrixXd x;

  int rows() const { return static_cast<int>(y.size()); }
};

inline MatrixXd incidence(const Panel& p) {
  MatrixXd z = MatrixXd::Zero(p.rows(), p.n);
  for (int r = 0; r < p.rows(); ++r) z(r, p.subject[r]) = 1.0;
  return z;
}

inline VectorXd psi_vec(const VectorXd& e, double tau) {
  VectorXd w(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) w[i] = psi(e[i], tau);
  return w;
}

// M_Z(tau) = I - Z (Z' Psi Z)^{-1} Z' Psi.
inline MatrixXd annihilator(const MatrixXd& z, const VectorXd& psi_diag) {
  const MatrixXd zt_psi = z.transpose() * psi_diag.asDiagonal();
  const MatrixXd proj = z * (zt_psi * z).inverse() * zt_psi;
  return MatrixXd::Identity(z.rows(), z.rows()) - proj;
}

// Stacked pooled annihilators over q blocks, Psi = diag(Psi_1, ..., Psi_q).
// verbatim:  P = (v (x) Z) [(v (x) Z)' Psi (1 (x) Z)]^{-1} (1 (x) Z)' Psi
// foc:       P = (1 (x) Z) [(v (x) Z)' Psi (1 (x) Z)]^{-1} (v (x) Z)' Psi
inline MatrixXd pooled_annihilator(const MatrixXd& z, const MatrixXd& psi_blocks, const VectorXd& v,
                                   bool verbatim) {
  const Eigen::Index big_n = z.rows();
  const Eigen::Index q = v.size();
  MatrixXd one_z(big_n * q, z.cols());
  MatrixXd v_z(big_n * q, z.cols());
  VectorXd psi_all(big_n * q);
  for (Eigen::Index k = 0; k < q; ++k) {
    one_z.middleRows(k * big_n, big_n) = z;
    v_z.middleRows(k * big_n, big_n) = v[k] * z;
    psi_all.segment(k * big_n, big_n) = psi_blocks.col(k);
  }
  const MatrixXd middle = (v_z.transpose() * psi_all.asDiagonal() * one_z).inverse();
  const MatrixXd proj = verbatim ? MatrixXd(v_z * middle * one_z.transpose() * psi_all.asDiagonal())
                                 : MatrixXd(one_z * middle * v_z.transpose() * psi_all.asDiagonal());
  return MatrixXd::Identity(big_n * q, big_n * q) - proj;
}

// ---- full-parameter minimization -------------------------------------------

// BFGS with backtracking (Armijo) line search.
inline VectorXd bfgs(const std::function<double(const VectorXd&)>& f,
                     const std::function<VectorXd(const VectorXd&)>& grad, VectorXd x, int max_iter = 5000,
                     double gtol = 1e-12) {
  const Eigen::Index d = x.size();
  MatrixXd h = MatrixXd::Identity(d, d);
  VectorXd g = grad(x);
  double fx = f(x);
  for (int it = 0; it < max_iter && g.lpNorm<Eigen::Infinity>() > gtol; ++it) {
    VectorXd dir = -h * g;
    if (dir.dot(g) >= 0.0) {
      h.setIdentity();
      dir = -g;
    }
    double step = 1.0;
    VectorXd xn = x + dir;
    double fn = f(xn);
    while (fn > fx + 1e-4 * step * g.dot(dir) && step > 1e-20) {
      step *= 0.5;
      xn = x + step * dir;
      fn = f(xn);
    }
    const VectorXd gn = grad(xn);
    const VectorXd s = xn - x;
    const VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-300) {
      const double r = 1.0 / sy;
      const MatrixXd i = MatrixXd::Identity(d, d);
      h = (i - r * s * yv.transpose()) * h * (i - r * yv * s.transpose()) + r * s * s.transpose();
    }
    if (s.lpNorm<Eigen::Infinity>() == 0.0) break;
    x = xn;
    fx = fn;
    g = gn;
  }
  return x;
}

// Multi-block objective sum_k v_k sum rho_{tau_k}(y - X b_k - Z a) with the
// parameter vector (b_1, ..., b_q, a).
struct JointProblem {
  const Panel& panel;
  std::vector<double> taus;
  VectorXd v;

  Eigen::Index p() const { return panel.x.cols(); }
  Eigen::Index q() const { return static_cast<Eigen::Index>(taus.size()); }
  Eigen::Index dim() const { return p() * q() + panel.n; }

  VectorXd residual(const VectorXd& theta, Eigen::Index k) const {
    const MatrixXd z = incidence(panel);
    return panel.y - panel.x * theta.segment(k * p(), p()) - z * theta.tail(panel.n);
  }

  double value(const VectorXd& theta) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < q(); ++k) {
      const VectorXd e = residual(theta, k);
      for (Eigen::Index i = 0; i < e.size(); ++i) s += v[k] * rho(e[i], taus[static_cast<std::size_t>(k)]);
    }
    return s;
  }

  VectorXd gradient(const VectorXd& theta) const {
    const MatrixXd z = incidence(panel);
    VectorXd g = VectorXd::Zero(dim());
    for (Eigen::Index k = 0; k < q(); ++k) {
      const VectorXd e = residual(theta, k);
      const VectorXd w = psi_vec(e, taus[static_cast<std::size_t>(k)]);
      const VectorXd we = (w.array() * e.array()).matrix();
      g.segment(k * p(), p()) = -2.0 * v[k] * panel.x.transpose() * we;
      g.tail(panel.n) += -2.0 * v[k] * z.transpose() * we;
    }
    return g;
  }

  // Exact minimizer for a fixed sign pattern: weighted least squares on the
  // full dummy design with the weights implied by theta's residual signs.
  VectorXd polish(const VectorXd& theta) const {
    const MatrixXd z = incidence(panel);
    const Eigen::Index big_n = panel.rows();
    MatrixXd design = MatrixXd::Zero(big_n * q(), dim());
    VectorXd rhs(big_n * q());
    VectorXd w(big_n * q());
    for (Eigen::Index k = 0; k < q(); ++k) {
      design.block(k * big_n, k * p(), big_n, p()) = panel.x;
      design.block(k * big_n, p() * q(), big_n, panel.n) = z;
      rhs.segment(k * big_n, big_n) = panel.y;
      w.segment(k * big_n, big_n) = v[k] * psi_vec(residual(theta, k), taus[static_cast<std::size_t>(k)]);
    }
    const MatrixXd a = design.transpose() * w.asDiagonal() * design;
    return a.ldlt().solve(design.transpose() * w.asDiagonal() * rhs);
  }

  VectorXd minimize() const {
    VectorXd theta = bfgs([this](const VectorXd& t) { return value(t); },
                          [this](const VectorXd& t) { return gradient(t); }, VectorXd::Zero(dim()));
    for (int it = 0; it < 50; ++it) {
      const VectorXd next = polish(theta);
      if (value(next) > value(theta)) break;
      const bool same = (next - theta).lpNorm<Eigen::Infinity>() == 0.0;
      theta = next;
      if (same) break;
    }
    return theta;
  }
};

// ---- dense sandwich ---------------------------------------------------------

struct DenseSandwich {
  MatrixXd d0;
  MatrixXd d1;
  MatrixXd vc;
};

// Joint sandwich from explicitly materialized matrices. `residuals` is N x q,
// and the concentrated design is M_Z(taus) (I_q (x) X) with weights V (x) Psi.
inline DenseSandwich dense_sandwich(const Panel& panel, const MatrixXd& residuals,
                                    const std::vector<double>& taus, const VectorXd& v) {
  const Eigen::Index big_n = panel.rows();
  const Eigen::Index p = panel.x.cols();
  const auto q = static_cast<Eigen::Index>(taus.size());
  const MatrixXd z = incidence(panel);
  MatrixXd psi_blocks(big_n, q);
  for (Eigen::Index k = 0; k < q; ++k) psi_blocks.col(k) = psi_vec(residuals.col(k), taus[static_cast<std::size_t>(k)]);
  const MatrixXd m = pooled_annihilator(z, psi_blocks, v, false);

  MatrixXd xs = MatrixXd::Zero(big_n * q, p * q);
  VectorXd wv(big_n * q);
  VectorXd e(big_n * q);
  for (Eigen::Index k = 0; k < q; ++k) {
    xs.block(k * big_n, k * p, big_n, p) = panel.x;
    wv.segment(k * big_n, big_n) = v[k] * psi_blocks.col(k);
    e.segment(k * big_n, big_n) = residuals.col(k);
  }
  const MatrixXd xt = m * xs;
  const double nobs = static_cast<double>(big_n);

  DenseSandwich out;
  out.d1 = xt.transpose() * wv.asDiagonal() * xt / nobs;
  out.d0 = MatrixXd::Zero(p * q, p * q);
  for (int i = 0; i < panel.n; ++i) {
    VectorXd g = VectorXd::Zero(p * q);
    for (Eigen::Index k = 0; k < q; ++k) {
      for (Eigen::Index r = 0; r < big_n; ++r) {
        if (panel.subject[static_cast<std::size_t>(r)] != i) continue;
        const Eigen::Index row = k * big_n + r;
        g += xt.row(row).transpose() * wv[row] * e[row];
      }
    }
    out.d0 += g * g.transpose();
  }
  out.d0 /= nobs;
  const MatrixXd inv = out.d1.inverse();
  out.vc = inv * out.d0 * inv / nobs;
  return out;
}

// ---- random panels -----------------------------------------------------------

inline Panel random_panel(std::mt19937_64& rng, int n, int m, int p, bool ragged = false) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> extra(0, 2);
  Panel out;
  out.n = n;
  std::vector<double> ys;
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * nd(rng);
    const int mi = ragged ? m + extra(rng) : m;
    for (int j = 0; j < mi; ++j) {
      std::vector<double> row(static_cast<std::size_t>(p));
      double mean = a;
      for (int c = 0; c < p; ++c) {
        row[static_cast<std::size_t>(c)] = nd(rng) + 0.5 * a;
        mean += (c + 1) * 0.5 * row[static_cast<std::size_t>(c)];
      }
      out.subject.push_back(i);
      ys.push_back(mean + (1.0 + 0.3 * std::abs(row[0])) * nd(rng));
      xs.push_back(row);
    }
  }
  out.y = Eigen::Map<VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  out.x.resize(static_cast<Eigen::Index>(xs.size()), p);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    for (int c = 0; c < p; ++c) out.x(static_cast<Eigen::Index>(r), c) = xs[r][static_cast<std::size_t>(c)];
  }
  return out;
}

// ---- Monte Carlo aggregation ---------------------------------------------------

struct Summary {
  double mean;
  double sd;  // divisor R
};

inline Summary summarize(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace oracle
