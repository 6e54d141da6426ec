#include "smol/levenberg_marquardt.hpp"

#include <cmath>

namespace smol {

LMResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x0, const LMOptions& opts) {
  LMResult result;
  if (opts.post_step) opts.post_step(x0);
  Eigen::VectorXd x = x0;
  Eigen::VectorXd r = fn(x);
  double sse = r.squaredNorm();
  result.params = x;
  result.sse = sse;

  if (sse == 0.0) {
    result.converged = true;
    return result;
  }

  const auto n_params = x.size();
  double lambda = opts.lambda_init;
  Eigen::MatrixXd J(r.size(), n_params);

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    result.iterations = iter;

    for (Eigen::Index j = 0; j < n_params; ++j) {
      const double h = (opts.fd_steps.size() == n_params) ? opts.fd_steps(j) : opts.fd_step_default;
      Eigen::VectorXd xp = x;
      xp(j) += h;
      J.col(j) = (fn(xp) - r) / h;
    }

    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = H.diagonal();
    const double diag_floor = 1e-12 * std::max(diag.maxCoeff(), 1e-300);
    for (Eigen::Index j = 0; j < n_params; ++j) diag(j) = std::max(diag(j), diag_floor);

    bool accepted = false;
    Eigen::VectorXd x_new;
    Eigen::VectorXd r_new;
    double sse_new = sse;
    double step_norm = 0.0;
    while (lambda <= opts.lambda_max) {
      Eigen::MatrixXd A = H;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd delta = A.ldlt().solve(-g);
      x_new = x + delta;
      if (opts.post_step) opts.post_step(x_new);
      r_new = fn(x_new);
      sse_new = r_new.squaredNorm();
      if (std::isfinite(sse_new) && sse_new < sse) {
        accepted = true;
        step_norm = (x_new - x).norm();
        lambda = std::max(lambda * opts.lambda_decrease, 1e-14);
        break;
      }
      lambda *= opts.lambda_increase;
    }

    if (!accepted) {
      // No downhill step exists at any damping: a (local) minimum.
      result.converged = true;
      break;
    }

    const double rel_reduction = (sse - sse_new) / std::max(sse, 1e-300);
    x = x_new;
    r = r_new;
    sse = sse_new;
    result.params = x;
    result.sse = sse;

    if (rel_reduction < opts.sse_rel_tol || step_norm < opts.step_tol) {
      result.converged = true;
      break;
    }
  }

  return result;
}

}  // namespace smol
