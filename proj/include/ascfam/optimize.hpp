#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace ascfam {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iterations = 200;
  /// Sup-norm bound on the finite-difference gradient.
  double grad_tolerance = 1e-3;
  /// Bound on |f_k - f_{k-1}| / max(1, |f_k|).
  double rel_tolerance = 1e-9;
  /// Largest allowed change of any coordinate in one step.
  double max_step = 2.0;
  /// Called after every accepted step with (iteration, x, f).
  std::function<void(int, const Eigen::VectorXd&, double)> on_iteration;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Central-difference gradient with per-coordinate step 1e-5 (1 + |x_i|).
Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 int* evaluations = nullptr);

/// Central-difference Hessian with per-coordinate step `rel_step` (1 + |x_i|).
Eigen::MatrixXd central_hessian(const Objective& f, const Eigen::VectorXd& x,
                                double rel_step = 1e-3, int* evaluations = nullptr);

/// Minimizes f with BFGS updates of the inverse Hessian and a backtracking
/// Armijo line search. Evaluations that throw or return a non-finite value
/// are treated as +infinity, so the search backs away from them. Accepted
/// steps strictly decrease f.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options);

}  // namespace ascfam
