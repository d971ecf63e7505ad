#pragma once

// Bayesian 2PL calibration from response matrices, per-person ability
// estimates with known item parameters, and per-feature ability correlations.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptest/eval_models.hpp"
#include "adaptest/irt.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/mcmc.hpp"
#include "adaptest/response_matrix.hpp"

namespace adaptest {

struct CalibrationPriors {
  double log_a_mean = 0.0;  // a ~ LogNormal(log_a_mean, log_a_sd)
  double log_a_sd = 0.5;
  double b_mean = 0.0;
  double b_sd = 1.0;
  double theta_mean = 0.0;
  double theta_sd = 1.0;
};

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

struct ItemCalibration {
  std::string item_id;
  Moments a;
  Moments b;
  double rhat_a = 0.0;
  double rhat_b = 0.0;
  std::size_t n_responses = 0;
  /// Everyone who answered got it right, or everyone got it wrong.
  bool quasi_separated = false;
};

struct PersonCalibration {
  std::string person_id;
  Moments theta;
};

struct CalibrationResult {
  std::vector<ItemCalibration> items;   // scored columns, matrix order
  std::vector<PersonCalibration> persons;
  std::vector<std::string> excluded_items;  // unscored columns
  double max_rhat = 0.0;
  double min_ess_bulk = 0.0;
  double min_ess_tail = 0.0;
  std::vector<double> acceptance_rates;
  std::vector<std::string> warnings;
};

/// Joint posterior over item (a, b) and person theta, sampled by
/// Metropolis-within-Gibbs with one block per item and one per person.
/// Unscored columns are ignored entirely.
CalibrationResult fit_2pl(const ResponseMatrix& matrix, const CalibrationPriors& priors,
                          const McmcConfig& config);

/// Bank fragment with posterior-mean parameters, e.g.
/// {"items": [{"item_id": "I01", "kind": "scored", "params": {"a": .., "b": ..}}]}.
nlohmann::json calibration_to_bank_fragment(const CalibrationResult& result);
nlohmann::json calibration_to_json(const CalibrationResult& result);

struct PersonTheta {
  std::string person_id;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n_responses = 0;
  /// No scored responses: the prior is returned unchanged.
  bool prior_only = false;
};

/// Independent grid posteriors per person. Missing cells and unscored
/// columns are skipped; answered scored columns must have parameters in the
/// bank.
std::vector<PersonTheta> estimate_person_thetas(const ResponseMatrix& matrix, const ItemBank& bank,
                                                const ThetaPrior& prior, const GridSpec& grid = {});

struct FeatureCorrelation {
  std::vector<std::string> features;
  /// Symmetric, unit diagonal: posterior medians of the correlation.
  std::vector<std::vector<double>> median;
  std::vector<std::vector<double>> lo95;
  std::vector<std::vector<double>> hi95;
  std::vector<std::string> warnings;
};

/// Two-stage analysis: per-feature-value ability estimates from that value's
/// items, then the validity model on every pair of feature values.
FeatureCorrelation feature_correlations(const ResponseMatrix& matrix, const ItemBank& bank,
                                        const std::string& dimension, const McmcConfig& config);

nlohmann::json feature_correlation_to_json(const FeatureCorrelation& fc);

/// Bernoulli responses of every person to every item of the bank: 2PL
/// probabilities for scored items, a fair coin for unscored ones.
ResponseMatrix simulate_response_matrix(const ItemBank& bank, const std::vector<double>& thetas,
                                        std::uint64_t seed);

}  // namespace adaptest
