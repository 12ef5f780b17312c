#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <span>

#include "tmsattack/core.hpp"

namespace tmsattack::stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

struct TTestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's unequal-variance t-test. One-sided tests the alternative
/// mean(a) < mean(b); two-sided tests mean(a) != mean(b).
inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b, bool one_sided = true) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("Welch t-test needs at least two values per sample");
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  if (va + vb <= 0.0) throw ValidationError("Welch t-test needs non-zero variance in at least one sample");
  TTestResult r;
  r.statistic = (mean(a) - mean(b)) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  if (one_sided) {
    r.p_value = boost::math::cdf(dist, r.statistic);
  } else {
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic)));
  }
  return r;
}

struct SlopeTestResult {
  double slope = 0.0;
  double intercept = 0.0;
  double standard_error = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;  // two-sided, slope != 0
};

inline SlopeTestResult ols_slope_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("slope test needs paired samples");
  if (x.size() < 3) throw ValidationError("slope test needs at least three points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (sxx <= 0.0) throw ValidationError("slope test needs non-constant x");
  SlopeTestResult r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - r.intercept - r.slope * x[k];
    sse += e * e;
  }
  const double df = static_cast<double>(x.size() - 2);
  r.standard_error = std::sqrt(sse / df / sxx);
  if (r.standard_error <= 0.0) {
    r.statistic = r.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
    r.p_value = r.slope == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = r.slope / r.standard_error;
  const boost::math::students_t dist(df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic)));
  return r;
}

}  // namespace tmsattack::stats
