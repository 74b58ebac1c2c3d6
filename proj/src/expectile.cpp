#include "erfe/expectile.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <limits>

#include "spd_solve.hpp"

namespace erfe {

void IrlsConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("IrlsConfig.tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("IrlsConfig.max_iter must be at least 1");
  if (!(tol_grad > 0.0)) throw std::invalid_argument("IrlsConfig.tol_grad must be positive");
}

namespace {

bool same_sides(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if ((a[i] > 0.0) != (b[i] > 0.0)) return false;
  }
  return true;
}

}  // namespace

double sample_expectile(const Eigen::VectorXd& values, AsymmetricPoint tau, const IrlsConfig& config) {
  config.validate();
  if (values.size() == 0) throw EmptyInput("sample_expectile: empty input");
  double theta = values.mean();
  if (tau.value() == 0.5) return theta;

  // Each step is a Newton step on the monotone piecewise-linear first-order
  // condition; once the sign pattern of y - theta stops changing the weighted
  // mean is exact.
  const double ulp_scale = 8.0 * std::numeric_limits<double>::epsilon() * values.lpNorm<Eigen::Infinity>();
  for (int it = 1; it <= config.max_iter; ++it) {
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const double w = check_weight(values[i] - theta, tau);
      num += w * (values[i] - theta);
      den += w;
    }
    const double next = theta + num / den;
    bool stable = true;
    for (Eigen::Index i = 0; i < values.size() && stable; ++i) {
      stable = (values[i] - theta > 0.0) == (values[i] - next > 0.0);
    }
    const double change = std::abs(next - theta);
    theta = next;
    if (stable || change <= ulp_scale) return theta;
  }
  throw NoConvergence("sample_expectile: weighted-mean iteration did not settle", config.max_iter);
}

ErFit expectile_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, AsymmetricPoint tau,
                           const IrlsConfig& config) {
  config.validate();
  if (x.rows() != y.size()) throw ShapeMismatch("expectile_regression: X and y row counts differ");
  if (x.rows() == 0) throw EmptyInput("expectile_regression: no observations");
  if (x.rows() < x.cols()) throw SingularGram("expectile_regression: fewer rows than columns", {});

  const Eigen::VectorXd col_ss = x.colwise().squaredNorm().transpose();
  ErFit fit;
  fit.tau = tau.value();
  fit.beta = detail::solve_spd(x.transpose() * x, Eigen::VectorXd(x.transpose() * y), col_ss, 0,
                               "expectile_regression");
  fit.residuals = y - x * fit.beta;

  const double grad_tol = config.tol_grad * (1.0 + y.lpNorm<Eigen::Infinity>());
  for (int it = 1; it <= config.max_iter; ++it) {
    const Eigen::VectorXd w = check_weights(fit.residuals, tau);
    const Eigen::MatrixXd gram = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd score = x.transpose() * (w.array() * fit.residuals.array()).matrix();
    const Eigen::VectorXd step =
        detail::solve_spd(gram, score, (col_ss * 0.5).eval(), it, "expectile_regression");
    const Eigen::VectorXd previous = fit.residuals;
    fit.beta += step;
    fit.residuals = y - x * fit.beta;
    fit.iterations = it;
    if (step.lpNorm<Eigen::Infinity>() <= config.tol) {
      bool settled = same_sides(previous, fit.residuals);
      if (!settled) {
        const Eigen::VectorXd w_new = check_weights(fit.residuals, tau);
        const Eigen::VectorXd grad = x.transpose() * (w_new.array() * fit.residuals.array()).matrix();
        settled = grad.lpNorm<Eigen::Infinity>() <= grad_tol;
      }
      if (settled) {
        fit.converged = true;
        return fit;
      }
    }
  }
  if (config.require_convergence) {
    throw NoConvergence("expectile_regression: no convergence within max_iter", config.max_iter);
  }
  return fit;
}

namespace {

namespace bm = boost::math;

double quad_half_line(const auto& integrand) {
  thread_local bm::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(integrand, 1e-13);
}

double quad_interval(const auto& integrand, double a, double b) {
  thread_local bm::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(integrand, a, b, 1e-13);
}

struct Spread {
  double center;
  double scale;
};

Spread spread(const Distribution& dist) {
  if (const auto* g = std::get_if<Gaussian>(&dist)) return {g->mean, g->sd};
  if (const auto* t = std::get_if<StudentT>(&dist)) return {0.0, std::sqrt(t->df / (t->df - 2.0))};
  const auto& c = std::get<ChiSquared>(dist);
  return {c.df, std::sqrt(2.0 * c.df)};
}

void validate(const Distribution& dist) {
  if (const auto* g = std::get_if<Gaussian>(&dist)) {
    if (!(g->sd > 0.0) || !std::isfinite(g->mean)) throw std::invalid_argument("gaussian needs sd > 0");
  } else if (const auto* t = std::get_if<StudentT>(&dist)) {
    if (!(t->df > 2.0)) throw std::invalid_argument("student_t expectiles require df > 2");
  } else if (!(std::get<ChiSquared>(dist).df > 0.0)) {
    throw std::invalid_argument("chi_squared needs df > 0");
  }
}

// Partial moments of a law supported on the whole line with density `pdf`.
template <class Pdf>
PartialMoments full_line_moments(const Pdf& pdf, double theta) {
  PartialMoments pm;
  pm.upper = quad_half_line([&](double t) { return t * pdf(theta + t); });
  pm.lower = quad_half_line([&](double t) { return t * pdf(theta - t); });
  return pm;
}

}  // namespace

double distribution_mean(const Distribution& dist) {
  validate(dist);
  return spread(dist).center;
}

PartialMoments partial_moments(const Distribution& dist, double theta) {
  validate(dist);
  if (const auto* g = std::get_if<Gaussian>(&dist)) {
    const bm::normal_distribution<double> law(g->mean, g->sd);
    return full_line_moments([&](double v) { return bm::pdf(law, v); }, theta);
  }
  if (const auto* t = std::get_if<StudentT>(&dist)) {
    const bm::students_t_distribution<double> law(t->df);
    return full_line_moments([&](double v) { return bm::pdf(law, v); }, theta);
  }
  const double df = std::get<ChiSquared>(dist).df;
  const bm::chi_squared_distribution<double> law(df);
  PartialMoments pm;
  if (theta <= 0.0) {
    pm.upper = df - theta;
    pm.lower = 0.0;
    return pm;
  }
  pm.upper = quad_half_line([&](double t) { return t * bm::pdf(law, theta + t); });
  pm.lower = quad_interval([&](double v) { return (theta - v) * bm::pdf(law, v); }, 0.0, theta);
  return pm;
}

double distribution_expectile(const Distribution& dist, AsymmetricPoint tau) {
  validate(dist);
  const double level = tau.value();
  const auto balance = [&](double theta) {
    const PartialMoments pm = partial_moments(dist, theta);
    return level * pm.upper - (1.0 - level) * pm.lower;
  };

  // balance() is strictly decreasing; expand a bracket around the mean.
  const Spread s = spread(dist);
  double lo = s.center - s.scale;
  double hi = s.center + s.scale;
  double f_lo = balance(lo);
  double f_hi = balance(hi);
  double step = s.scale;
  for (int k = 0; f_lo < 0.0; ++k) {
    if (k == 64) throw BracketFailure("distribution_expectile: could not bracket from below");
    step *= 2.0;
    hi = lo;
    f_hi = f_lo;
    lo -= step;
    f_lo = balance(lo);
  }
  step = s.scale;
  for (int k = 0; f_hi > 0.0; ++k) {
    if (k == 64) throw BracketFailure("distribution_expectile: could not bracket from above");
    step *= 2.0;
    lo = hi;
    f_lo = f_hi;
    hi += step;
    f_hi = balance(hi);
  }
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;

  std::uintmax_t max_iter = 200;
  const auto close_enough = [](double a, double b) { return std::abs(b - a) <= 1e-12; };
  const auto [a, b] =
      bm::tools::toms748_solve(balance, lo, hi, f_lo, f_hi, close_enough, max_iter);
  return 0.5 * (a + b);
}

}  // namespace erfe
