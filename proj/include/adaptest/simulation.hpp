#pragma once

// Simulation studies over an item bank: simulated test takers, the
// relative-standard-error length sweep and the mistake-recovery analysis.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptest/cat_engine.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/stats.hpp"

namespace adaptest {

struct SimulatedPerson {
  double true_theta = 0.0;
  std::uint64_t rng_seed = 0;
};

std::vector<SimulatedPerson> draw_persons(std::size_t n, double mean, double sd, std::uint64_t seed);

/// Bernoulli draw with the 2PL probability. The outcome depends only on the
/// person's seed and the item id, so it does not depend on the order items
/// are administered in. Throws for unscored items.
bool simulate_response(const SimulatedPerson& person, const Item& item);

/// (se_adaptive - se_original) / se_original.
double relative_se_difference(double se_adaptive, double se_original);

/// Runs one session to completion, answering scored items with
/// simulate_response and unscored items with option 0.
SessionState run_simulated_session(const ItemBank& bank, const SessionConfig& config,
                                   const SimulatedPerson& person);

enum class Baseline { full_bank, static_reference };
std::string_view to_string(Baseline b);
Baseline baseline_from_string(std::string_view s);

struct LengthSummary {
  std::size_t length = 0;
  double median = 0.0;
  Interval central66;
  Interval central95;
};

struct SweepResult {
  Baseline baseline = Baseline::full_bank;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<double>> values;  // [length][person]
  std::vector<LengthSummary> summaries;
};

/// For each length L and person: a full adaptive session of L scored items,
/// then the information-based SE at the final posterior mean for the
/// administered items and for the baseline items (answered by the same
/// person). Both posteriors are recomputed from responses in bank order, so
/// identical item sets give identical SEs.
SweepResult sweep_lengths(const ItemBank& bank, std::span<const std::size_t> lengths,
                          std::span<const SimulatedPerson> persons, Baseline baseline);

/// Parses "19:53" (inclusive range) or "11,13,15".
std::vector<std::size_t> parse_lengths(const std::string& spec);

/// CSV columns: length, person, rel_se_diff.
void write_sweep_csv(const SweepResult& result, std::ostream& out);
nlohmann::json sweep_summary_json(const SweepResult& result);

enum class RecoveryRule {
  printed,   // recovered at the first later step with d <= d at the mistake
  previous,  // recovered at the first later step with d <= d before the mistake
};

struct MistakeRecord {
  std::size_t person = 0;        // 1-based
  std::size_t mistake_step = 0;  // 1-based scored step i with d_i > d_{i-1}
  std::optional<std::size_t> recovery_length;
  bool censored() const { return !recovery_length.has_value(); }
};

/// Mistakes and recoveries in a distance sequence d_0, d_1, ..., d_n where
/// d_0 is the distance of the prior mean from the true ability.
std::vector<MistakeRecord> trace_recovery(std::span<const double> distances, RecoveryRule rule,
                                          std::size_t person = 1);

struct RecoveryResult {
  RecoveryRule rule = RecoveryRule::printed;
  std::vector<MistakeRecord> records;
  std::size_t n_persons = 0;
  std::size_t n_mistakes = 0;
  std::size_t n_recovered = 0;
  std::size_t n_censored = 0;
  /// Over recovered mistakes; NaN when there are none.
  double median_length = 0.0;
  double sd_length = 0.0;
};

RecoveryResult recovery_analysis(const ItemBank& bank, const SessionConfig& config,
                                 std::span<const SimulatedPerson> persons, RecoveryRule rule);

/// CSV columns: person, mistake_step, recovery_length, censored.
void write_recovery_csv(const RecoveryResult& result, std::ostream& out);
nlohmann::json recovery_summary_json(const RecoveryResult& result);

}  // namespace adaptest
