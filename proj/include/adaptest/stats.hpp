#pragma once

// Small descriptive-statistics helpers shared by the simulation and
// evaluation modules.

#include <span>
#include <vector>

namespace adaptest {

double mean_of(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sd_of(std::span<const double> xs);
/// Linear-interpolation quantile (type 7). Throws on empty input.
double quantile(std::span<const double> xs, double q);
double median_of(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Inverse of the standard normal CDF.
double normal_quantile(double p);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Central interval holding `mass` of the values (e.g. 0.95 -> 2.5%..97.5%).
Interval central_interval(std::span<const double> xs, double mass);

}  // namespace adaptest
