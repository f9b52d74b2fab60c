#include "ascfam/optimize.hpp"

#include <cmath>
#include <limits>

#include "ascfam/error.hpp"

namespace ascfam {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& count) {
  ++count;
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  } catch (const NumericalError&) {
    return kInf;
  }
}

}  // namespace

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, int* evaluations) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * h);
  }
  if (evaluations) *evaluations += static_cast<int>(2 * x.size());
  return g;
}

Eigen::MatrixXd central_hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step,
                                int* evaluations) {
  const Eigen::Index k = x.size();
  Eigen::VectorXd h(k);
  for (Eigen::Index i = 0; i < k; ++i) h(i) = rel_step * (1.0 + std::abs(x(i)));
  Eigen::MatrixXd hess(k, k);
  const double f0 = f(x);
  int count = 1;
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < k; ++i) {
    p(i) = x(i) + h(i);
    const double up = f(p);
    p(i) = x(i) - h(i);
    const double down = f(p);
    p(i) = x(i);
    count += 2;
    hess(i, i) = (up - 2.0 * f0 + down) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      double corners[4];
      int c = 0;
      for (double si : {1.0, -1.0}) {
        for (double sj : {1.0, -1.0}) {
          p(i) = x(i) + si * h(i);
          p(j) = x(j) + sj * h(j);
          corners[c++] = f(p);
        }
      }
      p(i) = x(i);
      p(j) = x(j);
      count += 4;
      hess(i, j) = hess(j, i) =
          (corners[0] - corners[1] - corners[2] + corners[3]) / (4.0 * h(i) * h(j));
    }
  }
  if (evaluations) *evaluations += count;
  return hess;
}

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options) {
  BfgsResult r;
  const Eigen::Index k = x0.size();
  r.x = std::move(x0);
  r.value = safe_eval(f, r.x, r.evaluations);
  if (!std::isfinite(r.value)) throw NumericalError("objective is not finite at the start point");
  r.gradient = central_gradient(f, r.x, &r.evaluations);
  if (r.gradient.lpNorm<Eigen::Infinity>() < options.grad_tolerance) {
    r.converged = true;
    r.message = "gradient below tolerance at start";
    return r;
  }

  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(k, k);
  bool fresh = true;
  while (r.iterations < options.max_iterations) {
    Eigen::VectorXd dir = -inv_hessian * r.gradient;
    double slope = dir.dot(r.gradient);
    if (!(slope < 0.0)) {
      inv_hessian.setIdentity();
      fresh = true;
      dir = -r.gradient;
      slope = dir.dot(r.gradient);
    }
    const double longest = dir.lpNorm<Eigen::Infinity>();
    double step = longest > options.max_step ? options.max_step / longest : 1.0;

    Eigen::VectorXd trial;
    double trial_value = kInf;
    bool accepted = false;
    for (int b = 0; b < kMaxBacktracks; ++b, step *= 0.5) {
      trial = r.x + step * dir;
      trial_value = safe_eval(f, trial, r.evaluations);
      if (trial_value <= r.value + kArmijo * step * slope && trial_value < r.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {
        inv_hessian.setIdentity();
        fresh = true;
        continue;
      }
      r.message = "line search failed";
      break;
    }

    ++r.iterations;
    const Eigen::VectorXd g_new = central_gradient(f, trial, &r.evaluations);
    const Eigen::VectorXd s = trial - r.x;
    const Eigen::VectorXd y = g_new - r.gradient;
    const double change = std::abs(r.value - trial_value) / std::max(1.0, std::abs(trial_value));
    r.x = trial;
    r.value = trial_value;
    r.gradient = g_new;
    if (options.on_iteration) options.on_iteration(r.iterations, r.x, r.value);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) inv_hessian *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(k, k) - rho * s * y.transpose();
      inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
      fresh = false;
    }
    if (change < options.rel_tolerance &&
        r.gradient.lpNorm<Eigen::Infinity>() < options.grad_tolerance) {
      r.converged = true;
      r.message = "converged";
      return r;
    }
  }
  if (r.message.empty()) r.message = "iteration limit reached";
  // A stalled line search at a stationary point still counts.
  r.converged = r.gradient.lpNorm<Eigen::Infinity>() < options.grad_tolerance &&
                r.message == "line search failed";
  return r;
}

}  // namespace ascfam
