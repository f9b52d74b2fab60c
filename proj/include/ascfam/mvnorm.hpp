#pragma once

// Multivariate normal densities, conditioning, sampling and rectangle
// probabilities.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ascfam::mvnorm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Gaussian {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// N(mean, diag(variance) + loading * loading^T): a one-factor Gaussian.
struct FactorGaussian {
  Vector mean;
  Vector variance;  // idiosyncratic variances, all > 0
  Vector loading;

  Eigen::Index dim() const { return mean.size(); }
  Gaussian dense() const;
};

/// Axis-aligned box; use +-infinity for open sides.
struct Rectangle {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  static Rectangle whole_space(Eigen::Index n);
};

struct ProbabilityEstimate {
  double probability = 0.0;
  double error = 0.0;
  bool converged = true;  // false when the accuracy target was not met
};

struct QmcOptions {
  double accuracy = 1e-6;
  int randomizations = 12;
  int min_points = 1 << 9;   // per randomization
  int max_points = 1 << 14;  // per randomization
  std::uint64_t seed = 0x5eedULL;
  /// Use exactly max_points with no early stop; the estimate is then a
  /// smooth function of the inputs for a fixed seed.
  bool fixed_points = false;
};

/// Lower Cholesky factor; on failure retries once with 1e-10*trace/n added
/// to the diagonal. Throws NumericalError if the matrix is still not PD.
Matrix cholesky(const Matrix& cov);

double log_density(const Gaussian& g, const Vector& x);
double log_density(const FactorGaussian& g, const Vector& x);

/// Conditional law of the unobserved coordinates given x[observed] = values.
/// The result is ordered like the complement of `observed` (ascending).
Gaussian condition(const Gaussian& g, std::span<const int> observed, const Vector& values);

/// `count` draws, one per row.
Matrix sample(const Gaussian& g, std::mt19937_64& rng, int count);

/// P(lower <= X <= upper). Closed form for n <= 2, randomized lattice QMC
/// (Genz separation of variables with variable reordering) for n >= 3.
ProbabilityEstimate rectangle_prob(const Gaussian& g, const Rectangle& r,
                                   const QmcOptions& options = {});

/// Same probability for a one-factor Gaussian by adaptive Gauss-Hermite
/// quadrature over the factor. `error` compares against a rule with half
/// as many nodes.
ProbabilityEstimate rectangle_prob(const FactorGaussian& g, const Rectangle& r,
                                   int nodes = 32);

/// log P(lower <= X <= upper) for a one-factor Gaussian; stays finite for
/// probabilities far below double underflow.
double log_rectangle_prob(const FactorGaussian& g, const Rectangle& r, int nodes = 32);

/// Orthant for a binary pattern: X_j > 0 when y_j = 1, X_j <= 0 when y_j = 0.
Rectangle orthant(std::span<const int> y);

}  // namespace ascfam::mvnorm
