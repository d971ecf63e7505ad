#pragma once

// Bayesian measurement-error models for paired ability scores:
//   - test-retest reliability (ICC) with a per-person random effect,
//   - convergent validity (correlation of latent scores on two tests),
// plus generators for simulated data and a sample-size study.
//
// Per-person latent scores are integrated out analytically, so each person's
// observed pair is bivariate Normal and the samplers see only a handful of
// parameters.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptest/item_bank.hpp"
#include "adaptest/mcmc.hpp"

namespace adaptest {

/// Two scores with standard errors for one person. For retest data 1 and 2
/// are the two attempts; for validity data 1 is the original test and 2 the
/// adaptive one.
struct PairedScores {
  std::string person_id;
  double theta_1 = 0.0;
  double se_1 = 0.0;
  double theta_2 = 0.0;
  double se_2 = 0.0;
};

using RetestObservation = PairedScores;
using PairedObservation = PairedScores;

/// CSV columns: person_id, theta_1, se_1, theta_2, se_2.
std::vector<PairedScores> read_paired_scores(const std::filesystem::path& path);
void write_paired_scores(const std::vector<PairedScores>& rows, const std::filesystem::path& path);

/// sigma_alpha^2 / (sigma_alpha^2 + sigma_epsilon^2).
double icc_from_variances(double sigma_alpha, double sigma_epsilon);

struct QuantitySummary {
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  double ess_tail = 0.0;

  double half_width() const { return 0.5 * (hi95 - lo95); }
};

QuantitySummary summarize_draws(const ChainDraws& draws);

struct IccPriors {
  double mu_mean = 0.0;
  double mu_sd = 1.0;
  double sigma_alpha_scale = 1.0;  // half-Normal(0, scale)
  double sigma_epsilon_scale = 1.0;
  /// Drops the standard errors from the likelihood.
  bool ignore_measurement_error = false;

  /// mu ~ Normal(-1, 1) for CALVI-like tests, Normal(0, 1) otherwise.
  static IccPriors for_family(TestFamily family);
};

/// Marginal log likelihood of all pairs under the retest model.
double icc_log_likelihood(const std::vector<PairedScores>& data, double mu, double sigma_alpha,
                          double sigma_epsilon, bool ignore_measurement_error = false);

struct IccPosterior {
  McmcRun run;               // mu, sigma_alpha, sigma_epsilon
  ChainDraws icc;            // per-draw ICC, same layout as run.draws
  std::map<std::string, QuantitySummary> summaries;  // mu, sigma_alpha, sigma_epsilon, icc
};

IccPosterior fit_icc_model(const std::vector<PairedScores>& data, const IccPriors& priors,
                           const McmcConfig& config);

struct ValidityPriors {
  double diff_mean = 0.0;
  double diff_sd = 1.0;
  double sigma_mean = 1.0;  // Normal(mean, sd) truncated to positive values
  double sigma_sd = 0.5;
};

/// Marginal log likelihood of the centered pairs: theta_1 has mean 0, theta_2
/// mean `diff`, latent covariance [[s1^2, rho s1 s2], [rho s1 s2, s2^2]] plus
/// the squared standard errors on the diagonal.
double validity_log_likelihood(const std::vector<PairedScores>& centered, double diff, double sigma_1,
                               double sigma_2, double rho);

/// Subtracts the mean of theta_1 from both scores.
std::vector<PairedScores> center_on_first(const std::vector<PairedScores>& data);

struct ValidityPosterior {
  McmcRun run;  // diff, sigma_original, sigma_adaptive, rho
  double centering_offset = 0.0;
  std::map<std::string, QuantitySummary> summaries;
};

ValidityPosterior fit_validity_model(const std::vector<PairedScores>& data, const ValidityPriors& priors,
                                     const McmcConfig& config);

struct RetestGenerator {
  std::size_t n = 200;
  double mu = 0.0;
  double sigma_alpha = 1.0;
  double sigma_epsilon = 0.33;
  double se = 0.2;
};

struct ValidityGenerator {
  std::size_t n = 200;
  double diff = 0.0;
  double sigma_1 = 1.0;
  double sigma_2 = 1.0;
  double rho = 0.8;
  double se_1 = 0.15;
  double se_2 = 0.15;
};

std::vector<PairedScores> simulate_retest(const RetestGenerator& g, std::uint64_t seed);
std::vector<PairedScores> simulate_validity(const ValidityGenerator& g, std::uint64_t seed);

enum class SampleSizeTarget { icc, validity };

struct SampleSizeRequest {
  SampleSizeTarget target = SampleSizeTarget::icc;
  RetestGenerator retest;
  ValidityGenerator validity;
  IccPriors icc_priors;
  ValidityPriors validity_priors;
  std::vector<std::size_t> candidate_ns;
  std::size_t replicates = 20;
  double target_half_width = 0.1;
  McmcConfig mcmc;
};

struct SampleSizeRow {
  std::size_t n = 0;
  std::vector<double> half_widths;  // one per replicate
  double median_half_width = 0.0;
};

struct SampleSizeResult {
  std::vector<SampleSizeRow> rows;
  /// Smallest candidate n whose median half-width reaches the target, or 0.
  std::size_t first_n_meeting_target = 0;
};

SampleSizeResult sample_size_simulation(const SampleSizeRequest& request, std::uint64_t seed);

nlohmann::json summary_to_json(const QuantitySummary& s);
nlohmann::json to_json(const IccPosterior& p);
nlohmann::json to_json(const ValidityPosterior& p);
nlohmann::json to_json(const SampleSizeResult& r, const SampleSizeRequest& request);

}  // namespace adaptest
