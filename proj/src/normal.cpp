#include "ascfam/normal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace ascfam::normal {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre half rules on (0,1] used by the bivariate integrand.
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384,
                                       0.4679139345726904};
constexpr std::array<double, 3> kX6 = {0.9324695142031522, 0.6612093864662647,
                                       0.2386191860831970};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183,
                                        0.1600783285433464,  0.2031674267230659,
                                        0.2334925365383547,  0.2491470458134029};
constexpr std::array<double, 6> kX12 = {0.9815606342467191, 0.9041172563704750,
                                        0.7699026741943050, 0.5873179542866171,
                                        0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 10> kW20 = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
    0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
    0.1527533871307259};
constexpr std::array<double, 10> kX20 = {
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733};

struct Rule {
  const double* x;
  const double* w;
  int size;
};

Rule pick_rule(double abs_r) {
  if (abs_r < 0.3) return {kX6.data(), kW6.data(), 3};
  if (abs_r < 0.75) return {kX12.data(), kW12.data(), 6};
  return {kX20.data(), kW20.data(), 10};
}

// Genz's BVNU: P(X > dh, Y > dk) with correlation r, finite dh, dk.
double bvnu(double dh, double dk, double r) {
  const Rule rule = pick_rule(std::abs(r));
  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;

  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (int i = 0; i < rule.size; ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sign * rule.x[i]));
        bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / kTwoPi + cdf(-h) * cdf(-k);
  }

  if (r < 0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) {
      bvn = a * std::exp(asr) *
            (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(kTwoPi) * cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a /= 2.0;
    double sum = 0.0;
    for (int i = 0; i < rule.size; ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double xs = std::pow(a * (1.0 + sign * rule.x[i]), 2);
        asr = -(bs / xs + hk) / 2.0;
        if (asr <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        sum += rule.w[i] * std::exp(asr) * (sp - ep);
      }
    }
    bvn = (a * sum - bvn) / kTwoPi;
  }
  if (r > 0) return bvn + cdf(-std::max(h, k));
  if (h >= k) return -bvn;
  const double l = h < 0 ? cdf(k) - cdf(h) : cdf(-h) - cdf(-k);
  return l - bvn;
}

}  // namespace

double pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double log_cdf(double z) {
  if (std::isinf(z)) return z > 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (z > 5.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
  if (z > -37.0) return std::log(0.5 * std::erfc(-z * kInvSqrt2));
  // Asymptotic Mills-ratio series for the far lower tail.
  const double z2 = 1.0 / (z * z);
  const double series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
  return log_pdf(z) - std::log(-z) + std::log(series);
}

double log_cdf_interval(double lo, double hi) {
  if (!(lo < hi)) return -std::numeric_limits<double>::infinity();
  if (lo > 0.0) {
    // Both bounds in the upper tail: reflect for accuracy.
    const double tmp = lo;
    lo = -hi;
    hi = -tmp;
  }
  const double log_hi = log_cdf(hi);
  if (std::isinf(lo)) return log_hi;
  const double log_lo = log_cdf(lo);
  return log_hi + std::log1p(-std::exp(log_lo - log_hi));
}

double quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double bivariate_upper(double h, double k, double rho) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return cdf(-k);
  if (k == -inf) return cdf(-h);
  if (rho >= 1.0) return cdf(-std::max(h, k));
  if (rho <= -1.0) return std::max(0.0, cdf(-h) - cdf(k));
  return std::clamp(bvnu(h, k, rho), 0.0, 1.0);
}

double bivariate_cdf(double h, double k, double rho) {
  return bivariate_upper(-h, -k, rho);
}

}  // namespace ascfam::normal
