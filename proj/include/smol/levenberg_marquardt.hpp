#pragma once

#include <functional>

#include <Eigen/Dense>

namespace smol {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LMOptions {
  int max_iterations = 200;
  double lambda_init = 1e-4;
  double lambda_increase = 10.0;
  double lambda_decrease = 0.2;
  double lambda_max = 1e12;
  double sse_rel_tol = 1e-10;   // relative SSE reduction below this -> converged
  double step_tol = 1e-12;      // accepted step norm below this -> converged
  Eigen::VectorXd fd_steps;     // per-parameter forward-difference steps; scalar fallback below
  double fd_step_default = 1e-6;
  // Applied to every trial parameter vector before evaluation (e.g. to keep
  // a quaternion block near unit norm); accepted steps keep the adjustment.
  std::function<void(Eigen::VectorXd&)> post_step;
};

struct LMResult {
  Eigen::VectorXd params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Dense Levenberg-Marquardt with forward-difference Jacobians and
/// multiplicative damping on the scaled normal equations. Damping grows on
/// rejected steps and shrinks on accepted ones; the best parameters seen are
/// returned even on non-convergence.
LMResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x0, const LMOptions& opts = {});

}  // namespace smol
