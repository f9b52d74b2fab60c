#include "ascfam/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ascfam/error.hpp"

namespace ascfam {
namespace {

// Above this slope-times-scale the Gauss-Hermite rule loses accuracy.
constexpr double kSharpSlope = 1.0;

HermiteRule build_rule(int n) {
  // Golub-Welsch for the initial nodes.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  HermiteRule rule;
  rule.nodes.resize(n);
  rule.log_weights.resize(n);
  const double p0 = std::pow(std::numbers::pi, -0.25);
  for (int i = 0; i < n; ++i) {
    double x = solver.eigenvalues()(i);
    // Newton polish on the orthonormal recurrence, then Christoffel weight.
    for (int iter = 0; iter < 3; ++iter) {
      double pm1 = 0.0;
      double p = p0;
      for (int k = 0; k < n; ++k) {
        const double next = (x * p - std::sqrt(k / 2.0) * pm1) / std::sqrt((k + 1) / 2.0);
        pm1 = p;
        p = next;
      }
      // p = p_n(x), pm1 = p_{n-1}(x); p_n' = sqrt(2n) p_{n-1}.
      x -= p / (std::sqrt(2.0 * n) * pm1);
    }
    double sum = 0.0;
    double pm1 = 0.0;
    double p = p0;
    for (int k = 0; k < n; ++k) {
      sum += p * p;
      const double next = (x * p - std::sqrt(k / 2.0) * pm1) / std::sqrt((k + 1) / 2.0);
      pm1 = p;
      p = next;
    }
    rule.nodes[i] = x;
    rule.log_weights[i] = -std::log(sum);
  }
  return rule;
}

}  // namespace

const HermiteRule& hermite_rule(int n) {
  if (n < 2 || n > 200) throw InputError("hermite_rule: node count out of range");
  static std::mutex mutex;
  static std::map<int, HermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

double log_integrate_normal(const std::function<double(double)>& log_f, int nodes,
                            double max_slope) {
  const HermiteRule& rule = hermite_rule(nodes);
  auto h = [&](double t) { return log_f(t) - 0.5 * t * t; };

  // Damped Newton for the mode of h using central differences.
  constexpr double step = 1e-4;
  double t = 0.0;
  double ht = h(t);
  double curvature = -1.0;
  for (int iter = 0; iter < 50; ++iter) {
    const double hp = h(t + step);
    const double hm = h(t - step);
    const double d1 = (hp - hm) / (2.0 * step);
    const double d2 = (hp - 2.0 * ht + hm) / (step * step);
    curvature = d2;
    double delta = d2 < -1e-8 ? -d1 / d2 : (d1 > 0 ? 1.0 : -1.0);
    delta = std::clamp(delta, -4.0, 4.0);
    double candidate = t + delta;
    double hc = h(candidate);
    int halvings = 0;
    while (!(hc >= ht) && halvings < 30) {
      delta *= 0.5;
      candidate = t + delta;
      hc = h(candidate);
      ++halvings;
    }
    if (!(hc >= ht)) break;
    t = candidate;
    ht = hc;
    if (std::abs(delta) < 1e-7) break;
  }
  {
    const double hp = h(t + step);
    const double hm = h(t - step);
    curvature = (hp - 2.0 * ht + hm) / (step * step);
  }
  const double scale = curvature < -1e-10 ? 1.0 / std::sqrt(-curvature) : 1.0;

  if (max_slope * scale > kSharpSlope) {
    // Step-like factors: adaptive Gauss-Kronrod over a window that holds all
    // but a negligible fraction of the mass (h'' <= -1 away from mixtures).
    auto g = [&](double u) { return std::exp(h(u) - ht); };
    const double half_width = 12.0 + 6.0 * scale;
    const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        g, t - half_width, t + half_width, 20, 1e-12);
    return ht + std::log(integral) - 0.5 * std::log(2.0 * std::numbers::pi);
  }

  const double spread = std::numbers::sqrt2 * scale;
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(rule.nodes.size());
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    terms[i] = rule.log_weights[i] + x * x + h(t + spread * x);
    if (terms[i] > max_term) max_term = terms[i];
  }
  if (!std::isfinite(max_term)) return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double term : terms) sum += std::exp(term - max_term);
  return std::log(spread) + max_term + std::log(sum) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace ascfam
