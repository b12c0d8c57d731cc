#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "eeknn/common.hpp"

namespace eeknn::stats {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be positive");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must be in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  require(df > 0.0, "student_t: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  double p_adjusted = 1.0;
  std::size_t df = 0;
};

/// Two-sided paired t-test on a - b with Bonferroni correction over
/// `num_comparisons` tests.
inline PairedTTest paired_ttest_bonferroni(std::span<const double> a, std::span<const double> b,
                                           std::size_t num_comparisons) {
  require(a.size() == b.size(), "paired_ttest: samples must have equal length");
  require(a.size() >= 2, "paired_ttest: need at least 2 pairs");
  require(num_comparisons >= 1, "paired_ttest: num_comparisons must be >= 1");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  PairedTTest r;
  r.df = n - 1;
  const double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
  } else {
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  }
  r.p_adjusted = std::min(1.0, r.p * static_cast<double>(num_comparisons));
  return r;
}

/// "**" for p < 0.01, "*" for p < 0.05, otherwise empty.
inline std::string significance_marker(double p_adjusted) {
  if (p_adjusted < 0.01) return "**";
  if (p_adjusted < 0.05) return "*";
  return "";
}

}  // namespace eeknn::stats
