#pragma once

#include <functional>
#include <vector>

namespace ascfam {

/// Gauss-Hermite rule for the weight exp(-x^2); log weights are stored so
/// that tiny outer weights keep full relative precision.
struct HermiteRule {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};

/// Cached rule with `n` nodes (2 <= n <= 200).
const HermiteRule& hermite_rule(int n);

/// log of  integral phi(t) * exp(log_f(t)) dt  over the real line.
///
/// Adaptive Gauss-Hermite: the rule is re-centred at the mode of the full
/// log integrand and scaled by its curvature there. Accurate when the
/// integrand is unimodal and smooth, which holds for products of normal
/// interval probabilities (log-concave) and their finite mixtures.
/// `max_slope` bounds |d/dt| of the standardized arguments inside log_f;
/// when it is steep relative to the integrand's width an adaptive
/// Gauss-Kronrod rule is used instead.
double log_integrate_normal(const std::function<double(double)>& log_f, int nodes,
                            double max_slope = 0.0);

}  // namespace ascfam
