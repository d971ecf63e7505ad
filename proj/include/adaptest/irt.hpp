#pragma once

// Two-parameter logistic (2PL) item response model and grid-based Bayesian
// scoring of the latent ability.
//
// The response function uses the easiness convention
//     p(theta) = 1 / (1 + exp(-a * (theta + b)))
// so a larger b makes an item easier at fixed theta.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace adaptest {

struct ItemParams {
  double discrimination = 1.0;  // a > 0
  double easiness = 0.0;        // b

  /// Throws Error(validation) unless a > 0 and both values are finite.
  static ItemParams make(double discrimination, double easiness);

  friend bool operator==(const ItemParams&, const ItemParams&) = default;
};

double prob_correct(double theta, const ItemParams& params) noexcept;

/// log p and log(1 - p), evaluated without forming p (safe for large |z|).
double log_prob_correct(double theta, const ItemParams& params) noexcept;
double log_prob_incorrect(double theta, const ItemParams& params) noexcept;

double item_information(double theta, const ItemParams& params) noexcept;

/// Sum of item information. Throws on an empty item set.
double test_information(double theta, std::span<const ItemParams> items);

/// 1 / sqrt(test information). Throws "degenerate information" when the
/// information underflows to zero.
double standard_error(double theta, std::span<const ItemParams> items);

struct GridSpec {
  double lo = -6.0;
  double hi = 6.0;
  std::size_t n_points = 1201;

  double step() const { return (hi - lo) / static_cast<double>(n_points - 1); }
  double node(std::size_t i) const { return lo + step() * static_cast<double>(i); }
  void validate() const;
};

struct Response {
  ItemParams params;
  bool correct = false;
};

/// Discretized posterior over ability. Holds the unnormalized log density on
/// a uniform grid; mean and sd are trapezoid-rule moments of the normalized
/// density.
class GridPosterior {
 public:
  /// Normal(prior_mean, prior_sd) restricted to the grid. The grid must span
  /// prior_mean +/- 5 prior_sd.
  static GridPosterior from_prior(double prior_mean, double prior_sd, const GridSpec& grid = {});

  /// Returns the posterior after multiplying in one more response.
  GridPosterior updated(const Response& response) const;
  void update_in_place(const Response& response);

  const GridSpec& grid() const noexcept { return grid_; }
  double mean() const noexcept { return mean_; }
  double sd() const noexcept { return sd_; }
  std::span<const double> log_density() const noexcept { return log_density_; }

  /// Normalized density values (integrate to 1 under the trapezoid rule).
  std::vector<double> density() const;

  /// Trapezoid mass carried by the first and last grid point.
  std::pair<double, double> edge_mass() const;

 private:
  GridPosterior(GridSpec grid, std::vector<double> log_density);
  void refresh_moments();

  GridSpec grid_;
  std::vector<double> log_density_;
  double mean_ = 0.0;
  double sd_ = 0.0;
};

/// Edge-point mass at or above this fraction means the grid truncates the
/// posterior.
inline constexpr double kGridTruncationMass = 1e-3;

/// Full posterior from scratch. Throws Error(numerical, "grid truncation")
/// when the grid is too narrow for the prior or the resulting posterior.
GridPosterior posterior_from_responses(double prior_mean, double prior_sd,
                                       std::span<const Response> responses,
                                       const GridSpec& grid = {});

}  // namespace adaptest
