#include "adaptest/irt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "adaptest/error.hpp"

namespace adaptest {

namespace {

// log(1 / (1 + exp(-z))) without overflow for either sign of z.
double log_sigmoid(double z) noexcept {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double linear_predictor(double theta, const ItemParams& p) noexcept {
  return p.discrimination * (theta + p.easiness);
}

}  // namespace

ItemParams ItemParams::make(double discrimination, double easiness) {
  if (!std::isfinite(discrimination) || !std::isfinite(easiness)) {
    throw Error(ErrorCode::validation, "item parameters must be finite");
  }
  if (discrimination <= 0.0) {
    throw Error(ErrorCode::validation, "discrimination must be positive");
  }
  return ItemParams{discrimination, easiness};
}

double prob_correct(double theta, const ItemParams& params) noexcept {
  const double z = linear_predictor(theta, params);
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_prob_correct(double theta, const ItemParams& params) noexcept {
  return log_sigmoid(linear_predictor(theta, params));
}

double log_prob_incorrect(double theta, const ItemParams& params) noexcept {
  return log_sigmoid(-linear_predictor(theta, params));
}

double item_information(double theta, const ItemParams& params) noexcept {
  const double p = prob_correct(theta, params);
  return params.discrimination * params.discrimination * p * (1.0 - p);
}

double test_information(double theta, std::span<const ItemParams> items) {
  if (items.empty()) {
    throw Error(ErrorCode::invalid_argument, "empty item set");
  }
  double total = 0.0;
  for (const auto& item : items) {
    total += item_information(theta, item);
  }
  return total;
}

double standard_error(double theta, std::span<const ItemParams> items) {
  const double info = test_information(theta, items);
  if (!(info > 0.0)) {
    throw Error(ErrorCode::numerical, "degenerate information");
  }
  return 1.0 / std::sqrt(info);
}

void GridSpec::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorCode::invalid_argument, "grid bounds must satisfy lo < hi");
  }
  if (n_points < 3) {
    throw Error(ErrorCode::invalid_argument, "grid needs at least 3 points");
  }
}

GridPosterior::GridPosterior(GridSpec grid, std::vector<double> log_density)
    : grid_(grid), log_density_(std::move(log_density)) {
  refresh_moments();
}

GridPosterior GridPosterior::from_prior(double prior_mean, double prior_sd, const GridSpec& grid) {
  grid.validate();
  if (!std::isfinite(prior_mean) || !(prior_sd > 0.0) || !std::isfinite(prior_sd)) {
    throw Error(ErrorCode::invalid_argument, "prior needs a finite mean and positive sd");
  }
  if (grid.lo > prior_mean - 5.0 * prior_sd || grid.hi < prior_mean + 5.0 * prior_sd) {
    throw Error(ErrorCode::numerical, "grid truncation: grid must span prior mean +/- 5 sd");
  }
  std::vector<double> log_density(grid.n_points);
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    const double z = (grid.node(i) - prior_mean) / prior_sd;
    log_density[i] = -0.5 * z * z;
  }
  return GridPosterior(grid, std::move(log_density));
}

void GridPosterior::update_in_place(const Response& response) {
  for (std::size_t i = 0; i < log_density_.size(); ++i) {
    const double theta = grid_.node(i);
    log_density_[i] += response.correct ? log_prob_correct(theta, response.params)
                                        : log_prob_incorrect(theta, response.params);
  }
  refresh_moments();
}

GridPosterior GridPosterior::updated(const Response& response) const {
  GridPosterior next = *this;
  next.update_in_place(response);
  return next;
}

std::vector<double> GridPosterior::density() const {
  const double peak = *std::max_element(log_density_.begin(), log_density_.end());
  const double h = grid_.step();
  std::vector<double> values(log_density_.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::exp(log_density_[i] - peak);
    const double w = (i == 0 || i + 1 == values.size()) ? 0.5 * h : h;
    mass += w * values[i];
  }
  for (double& v : values) {
    v /= mass;
  }
  return values;
}

std::pair<double, double> GridPosterior::edge_mass() const {
  const auto values = density();
  const double half = 0.5 * grid_.step();
  return {half * values.front(), half * values.back()};
}

void GridPosterior::refresh_moments() {
  const double peak = *std::max_element(log_density_.begin(), log_density_.end());
  const double h = grid_.step();
  const std::size_t n = log_density_.size();
  double mass = 0.0;
  double first = 0.0;
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (i == 0 || i + 1 == n) ? 0.5 * h : h;
    weight[i] = w * std::exp(log_density_[i] - peak);
    mass += weight[i];
    first += weight[i] * grid_.node(i);
  }
  mean_ = first / mass;
  double second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = grid_.node(i) - mean_;
    second += weight[i] * d * d;
  }
  sd_ = std::sqrt(second / mass);
}

GridPosterior posterior_from_responses(double prior_mean, double prior_sd,
                                       std::span<const Response> responses,
                                       const GridSpec& grid) {
  auto posterior = GridPosterior::from_prior(prior_mean, prior_sd, grid);
  for (const auto& r : responses) {
    posterior.update_in_place(r);
  }
  const auto [lo_mass, hi_mass] = posterior.edge_mass();
  if (lo_mass >= kGridTruncationMass || hi_mass >= kGridTruncationMass) {
    throw Error(ErrorCode::numerical, "grid truncation");
  }
  return posterior;
}

}  // namespace adaptest
