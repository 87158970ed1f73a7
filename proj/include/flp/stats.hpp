#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "flp/common.hpp"

namespace flp {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Gaussian upper-tail probability Q(x) = P(Z > x).
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse standard normal CDF. Acklam's rational initializer followed by two
// Halley refinements against erfc keeps relative error under 1e-10 across
// p in [1e-300, 1 - 1e-12] (tail-symmetric).
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  for (int it = 0; it < 2; ++it) {
    const double e = normal_cdf(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
    if (pdf <= 0.0) break;
    const double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);  // Halley step
  }
  return x;
}

// Inverse of Q: Q(q_inverse(p)) == p.
inline double q_inverse(double p) { return -normal_quantile(p); }

// Chi-square quantile for even degrees of freedom 2*r. With T/2 ~ Gamma(r,1)
// the survival function is the Erlang tail e^{-t} * sum_{j<r} t^j/j!, solved
// by a guarded Newton iteration. Exact closed-form tail, no series truncation.
inline double chi2_quantile_even(int r, double p) {
  require(r >= 1, "chi2_quantile_even: r >= 1");
  require(p > 0.0 && p < 1.0, "chi2_quantile_even: p in (0,1)");

  const double target = 1.0 - p;  // survival value to hit
  auto survival = [r](double t) {
    double term = 1.0, sum = 1.0;
    for (int j = 1; j < r; ++j) {
      term *= t / j;
      sum += term;
    }
    return std::exp(-t) * sum;
  };
  auto density = [r](double t) {  // -d/dt survival = e^{-t} t^{r-1}/(r-1)!
    double v = std::exp(-t);
    for (int j = 1; j < r; ++j) v *= t / j;
    return v;
  };

  double lo = 0.0, hi = static_cast<double>(r);
  while (survival(hi) > target) hi *= 2.0;
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double s = survival(t);
    if (s > target)
      lo = t;
    else
      hi = t;
    const double f = density(t);
    double next = (f > 0.0) ? t - (target - s) / f : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-14 * (1.0 + t)) {
      t = next;
      break;
    }
    t = next;
  }
  return 2.0 * t;
}

// Central 99% acceptance interval [lo, hi] for a Binomial(n, p) count,
// computed from the exact pmf (log-gamma based, numerically stable).
struct BinomialInterval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool contains(std::int64_t k) const { return k >= lo && k <= hi; }
};

inline BinomialInterval binomial_interval_99(std::int64_t n, double p) {
  require(n > 0 && p > 0.0 && p < 1.0, "binomial_interval_99: need n>0, p in (0,1)");
  auto log_pmf = [&](std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
  };
  BinomialInterval iv;
  double cum = 0.0;
  std::int64_t k = 0;
  for (; k <= n; ++k) {
    cum += std::exp(log_pmf(k));
    if (cum > 0.005) break;
  }
  iv.lo = k;
  cum = 0.0;
  std::int64_t j = n;
  for (; j >= 0; --j) {
    cum += std::exp(log_pmf(j));
    if (cum > 0.005) break;
  }
  iv.hi = j;
  if (iv.hi < iv.lo) iv.hi = iv.lo;
  return iv;
}

}  // namespace flp
