#pragma once

#include <Eigen/Dense>

#include <variant>

#include "erfe/panel.hpp"

namespace erfe {

struct IrlsConfig {
  double tol = 1e-7;       // sup-norm change in the coefficients
  int max_iter = 100;
  double tol_grad = 1e-6;  // first-order condition, relative to 1 + |y|_inf
  // When false, fits that hit max_iter are returned with converged = false
  // instead of raising NoConvergence.
  bool require_convergence = true;

  void validate() const;
};

// Cross-sectional expectile regression fit.
struct ErFit {
  double tau = 0.5;
  Eigen::VectorXd beta;
  Eigen::VectorXd residuals;
  int iterations = 0;
  bool converged = false;
};

// Sample expectile: fixed point of the weighted-mean map
// theta -> sum psi(y - theta) y / sum psi(y - theta).
double sample_expectile(const Eigen::VectorXd& values, AsymmetricPoint tau,
                        const IrlsConfig& config = {});

// Expectile regression by iterated weighted least squares, warm-started at OLS.
// No intercept is added; include a column of ones for one.
ErFit expectile_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           AsymmetricPoint tau, const IrlsConfig& config = {});

struct Gaussian {
  double mean = 0.0;
  double sd = 1.0;
};
struct StudentT {
  double df = 3.0;
};
struct ChiSquared {
  double df = 3.0;
};
using Distribution = std::variant<Gaussian, StudentT, ChiSquared>;

double distribution_mean(const Distribution& dist);

// Upper and lower partial moments E[(Y - theta)+] and E[(theta - Y)+] by
// adaptive quadrature.
struct PartialMoments {
  double upper = 0.0;
  double lower = 0.0;
};
PartialMoments partial_moments(const Distribution& dist, double theta);

// Expectile of an analytic law: the root of
// tau * E[(Y - theta)+] - (1 - tau) * E[(theta - Y)+], to absolute tolerance 1e-9.
// Student t requires df > 2.
double distribution_expectile(const Distribution& dist, AsymmetricPoint tau);

}  // namespace erfe
