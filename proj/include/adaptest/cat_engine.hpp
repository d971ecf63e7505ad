#pragma once

// Fixed-length adaptive test administration: maximum-information item
// selection under content-balancing constraints, Bayesian score updates,
// and interleaving of unscored items at configured positions.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adaptest/irt.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/random.hpp"

namespace adaptest {

struct SessionConfig {
  std::size_t scored_length = 0;
  std::vector<std::string> covering_dimensions;
  std::size_t n_unscored_interleaved = 0;
  std::vector<std::size_t> unscored_positions;  // 1-based, distinct
  std::uint64_t rng_seed = 0;
  std::optional<ThetaPrior> prior_override;
  GridSpec grid;

  std::size_t total_length() const noexcept { return scored_length + n_unscored_interleaved; }
  friend bool operator==(const SessionConfig& a, const SessionConfig& b) {
    return a.scored_length == b.scored_length && a.covering_dimensions == b.covering_dimensions &&
           a.n_unscored_interleaved == b.n_unscored_interleaved &&
           a.unscored_positions == b.unscored_positions && a.rng_seed == b.rng_seed &&
           a.prior_override == b.prior_override && a.grid.lo == b.grid.lo &&
           a.grid.hi == b.grid.hi && a.grid.n_points == b.grid.n_points;
  }
};

nlohmann::json config_to_json(const SessionConfig& config);
SessionConfig config_from_json(const nlohmann::json& j);

inline constexpr std::size_t kVlatScoredLength = 27;
inline constexpr std::size_t kCalviScoredLength = 11;
inline constexpr std::size_t kCalviUnscoredSlots = 4;

/// `n` distinct sorted 1-based positions out of 1..total_length.
std::vector<std::size_t> draw_unscored_positions(std::size_t total_length, std::size_t n,
                                                 std::uint64_t layout_seed);

/// Family defaults: vlat_like -> 27 scored items; calvi_like -> 11 scored plus
/// 4 unscored slots whose positions are drawn once from `layout_seed`;
/// custom -> the coverage minimum with no unscored slots.
SessionConfig default_session_config(const ItemBank& bank, std::uint64_t layout_seed = 0);

/// Shortest length for which every value of `dimensions` is guaranteed to be
/// covered: total feature count minus (dimensions per item - 1), because the
/// first pick retires one value of every dimension the item carries.
std::size_t coverage_minimum(const ItemBank& bank, const std::vector<std::string>& dimensions);

/// Throws Error(infeasible, "length below coverage minimum ...") and friends.
void validate_config(const SessionConfig& config, const ItemBank& bank);

using FeaturePair = std::pair<std::string, std::string>;

struct CoverageLedger {
  std::set<FeaturePair> uncovered;

  static CoverageLedger for_bank(const ItemBank& bank, const std::vector<std::string>& dimensions);
  /// Number of still-uncovered features the item carries.
  std::size_t covers(const Item& item) const;
  void retire(const Item& item);
};

struct AdministeredItem {
  std::string item_id;
  int selected_index = 0;
  bool correct = false;
  bool scored = false;
  friend bool operator==(const AdministeredItem&, const AdministeredItem&) = default;
};

enum class SessionStatus { active, completed };
std::string_view to_string(SessionStatus status);

struct SessionState {
  std::string session_id;
  std::string bank_id;
  SessionConfig config;
  GridPosterior posterior;
  std::vector<AdministeredItem> administered;
  CoverageLedger ledger;
  std::optional<std::string> pending_item;
  SessionStatus status = SessionStatus::active;
  std::map<std::size_t, std::string> unscored_assignment;  // position -> item_id
  std::vector<bool> used;  // indexed like bank.items

  std::size_t scored_count() const;
  std::size_t correct_scored_count() const;
  /// 1-based position of the pending item (administered + 1).
  std::size_t next_position() const noexcept { return administered.size() + 1; }
};

struct Score {
  double theta_mean = 0.0;
  double theta_se = 0.0;
  double raw_correctness = 0.0;
  std::size_t n_scored = 0;
  std::size_t n_correct = 0;
  friend bool operator==(const Score&, const Score&) = default;
};

nlohmann::json score_to_json(const Score& score);
Score score_from_json(const nlohmann::json& j);

/// Pool that unscored slots draw from: the CBI-flagged unscored items when
/// there are enough of them, otherwise every unscored item. Sorted by id.
std::vector<std::string> unscored_pool(const ItemBank& bank, std::size_t needed);

/// Seeded uniform assignment of pool items to the configured slots.
std::map<std::size_t, std::string> assign_unscored_positions(const SessionConfig& config,
                                                             const ItemBank& bank, Rng& rng);

SessionState start_session(const ItemBank& bank, const SessionConfig& config,
                           std::string session_id = "local");

/// Picks the next scored item, retires its features from the ledger, marks
/// it used and makes it pending. With R remaining scored slots and U
/// uncovered features, candidates must carry at least U - R + 1 uncovered
/// features (none required when R > U). Ties go to the smallest item_id.
std::string select_next_scored(SessionState& state, const ItemBank& bank);

SessionState submit_answer(SessionState state, const ItemBank& bank, const std::string& item_id,
                           int selected_index);

Score final_score(const SessionState& state);

}  // namespace adaptest
