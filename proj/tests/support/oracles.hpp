#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical code.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

/// 2PL probability evaluated directly in long double.
inline long double p_correct(long double theta, long double a, long double b) {
  return 1.0L / (1.0L + std::exp(-a * (theta + b)));
}

/// Composite Simpson rule on n points (n odd).
inline long double simpson(const std::function<long double(long double)>& f, long double lo, long double hi,
                           std::size_t n = 10001) {
  if (n % 2 == 0) ++n;
  const long double h = (hi - lo) / static_cast<long double>(n - 1);
  long double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i + 1 < n; ++i) acc += (i % 2 ? 4.0L : 2.0L) * f(lo + h * static_cast<long double>(i));
  return acc * h / 3.0L;
}

struct Obs {
  double a;
  double b;
  bool correct;
};

struct Moments {
  double mean;
  double sd;
};

/// Posterior mean and sd of theta under a Normal prior and 2PL responses,
/// by 10,001-point Simpson quadrature over prior mean +/- 12 prior sd.
inline Moments posterior(double prior_mean, double prior_sd, const std::vector<Obs>& obs,
                         std::size_t n = 10001) {
  const long double lo = prior_mean - 12.0L * prior_sd;
  const long double hi = prior_mean + 12.0L * prior_sd;
  auto log_unnorm = [&](long double t) {
    const long double z = (t - prior_mean) / prior_sd;
    long double lp = -0.5L * z * z;
    for (const auto& o : obs) {
      const long double p = p_correct(t, o.a, o.b);
      lp += std::log(o.correct ? p : 1.0L - p);
    }
    return lp;
  };
  // Shift by the log density at the mode of a coarse scan to avoid underflow.
  long double shift = -1e300L;
  for (int i = 0; i <= 2000; ++i) shift = std::max(shift, log_unnorm(lo + (hi - lo) * i / 2000.0L));
  auto dens = [&](long double t) { return std::exp(log_unnorm(t) - shift); };
  const long double z0 = simpson(dens, lo, hi, n);
  const long double m1 = simpson([&](long double t) { return t * dens(t); }, lo, hi, n) / z0;
  const long double m2 = simpson([&](long double t) { return (t - m1) * (t - m1) * dens(t); }, lo, hi, n) / z0;
  return {static_cast<double>(m1), static_cast<double>(std::sqrt(m2))};
}

/// Normal density.
inline long double normal_pdf(long double x, long double mean, long double sd) {
  const long double z = (x - mean) / sd;
  return std::exp(-0.5L * z * z) / (sd * std::sqrt(2.0L * 3.14159265358979323846264338327950288L));
}

}  // namespace oracle
