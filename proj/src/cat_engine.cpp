#include "adaptest/cat_engine.hpp"

#include <algorithm>
#include <numeric>

namespace adaptest {

using nlohmann::json;

json config_to_json(const SessionConfig& c) {
  json j;
  j["scored_length"] = c.scored_length;
  j["covering_dimensions"] = c.covering_dimensions;
  j["n_unscored_interleaved"] = c.n_unscored_interleaved;
  j["unscored_positions"] = c.unscored_positions;
  j["rng_seed"] = c.rng_seed;
  if (c.prior_override) {
    j["prior_override"] = {{"mean", c.prior_override->mean}, {"sd", c.prior_override->sd}};
  } else {
    j["prior_override"] = nullptr;
  }
  j["grid"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"n_points", c.grid.n_points}};
  return j;
}

SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  c.scored_length = j.at("scored_length").get<std::size_t>();
  c.covering_dimensions = j.at("covering_dimensions").get<std::vector<std::string>>();
  c.n_unscored_interleaved = j.value("n_unscored_interleaved", std::size_t{0});
  c.unscored_positions = j.value("unscored_positions", std::vector<std::size_t>{});
  c.rng_seed = j.value("rng_seed", std::uint64_t{0});
  if (j.contains("prior_override") && !j.at("prior_override").is_null()) {
    const auto& p = j.at("prior_override");
    c.prior_override = ThetaPrior{p.at("mean").get<double>(), p.at("sd").get<double>()};
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid = GridSpec{g.at("lo").get<double>(), g.at("hi").get<double>(),
                      g.at("n_points").get<std::size_t>()};
  }
  return c;
}

std::size_t coverage_minimum(const ItemBank& bank, const std::vector<std::string>& dimensions) {
  std::size_t features = 0;
  for (const auto& dim : dimensions) {
    auto it = bank.vocabularies.find(dim);
    if (it != bank.vocabularies.end()) features += it->second.size();
  }
  std::size_t dims_per_item = 0;
  for (const auto& item : bank.items) {
    if (!item.scored()) continue;
    std::size_t n = 0;
    for (const auto& dim : dimensions) n += item.features.count(dim);
    dims_per_item = std::max(dims_per_item, n);
  }
  if (features == 0) return 1;
  if (dims_per_item <= 1) return features;
  return features - (dims_per_item - 1);
}

std::vector<std::size_t> draw_unscored_positions(std::size_t total_length, std::size_t n,
                                                 std::uint64_t layout_seed) {
  if (n > total_length) throw Error(ErrorCode::infeasible, "more unscored slots than positions");
  std::vector<std::size_t> positions(total_length);
  std::iota(positions.begin(), positions.end(), std::size_t{1});
  Rng rng(derive_seed(layout_seed, 0x1a70));
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(n);
  std::sort(positions.begin(), positions.end());
  return positions;
}

SessionConfig default_session_config(const ItemBank& bank, std::uint64_t layout_seed) {
  SessionConfig c;
  c.covering_dimensions = bank.covering_dimensions;
  switch (bank.test_family) {
    case TestFamily::vlat_like:
      c.scored_length = kVlatScoredLength;
      break;
    case TestFamily::calvi_like: {
      c.scored_length = kCalviScoredLength;
      c.n_unscored_interleaved = kCalviUnscoredSlots;
      c.unscored_positions = draw_unscored_positions(c.total_length(), c.n_unscored_interleaved, layout_seed);
      break;
    }
    case TestFamily::custom:
      c.scored_length = coverage_minimum(bank, c.covering_dimensions);
      break;
  }
  c.scored_length = std::min(c.scored_length, bank.scored_count());
  return c;
}

std::vector<std::string> unscored_pool(const ItemBank& bank, std::size_t needed) {
  std::vector<std::string> flagged;
  std::vector<std::string> all;
  for (const auto& item : bank.items) {
    if (item.scored()) continue;
    all.push_back(item.item_id);
    if (item.has_cbi_option) flagged.push_back(item.item_id);
  }
  auto& pool = flagged.size() >= needed && needed > 0 ? flagged : all;
  std::sort(pool.begin(), pool.end());
  return pool;
}

void validate_config(const SessionConfig& config, const ItemBank& bank) {
  if (config.scored_length == 0) {
    throw Error(ErrorCode::infeasible, "scored_length must be positive");
  }
  for (const auto& dim : config.covering_dimensions) {
    if (!bank.vocabularies.count(dim)) {
      throw Error(ErrorCode::infeasible, "covering dimension '" + dim + "' not in bank vocabularies");
    }
  }
  const std::size_t minimum = coverage_minimum(bank, config.covering_dimensions);
  if (config.scored_length < minimum) {
    throw Error(ErrorCode::infeasible, "length below coverage minimum (" + std::to_string(minimum) +
                                           " scored items required)");
  }
  if (config.scored_length > bank.scored_count()) {
    throw Error(ErrorCode::infeasible, "scored_length exceeds the number of scored items in the bank");
  }
  if (config.unscored_positions.size() != config.n_unscored_interleaved) {
    throw Error(ErrorCode::infeasible, "unscored_positions must list n_unscored_interleaved slots");
  }
  std::set<std::size_t> distinct(config.unscored_positions.begin(), config.unscored_positions.end());
  if (distinct.size() != config.unscored_positions.size()) {
    throw Error(ErrorCode::infeasible, "unscored positions must be distinct");
  }
  for (std::size_t p : config.unscored_positions) {
    if (p < 1 || p > config.total_length()) {
      throw Error(ErrorCode::infeasible, "unscored position out of range");
    }
  }
  if (unscored_pool(bank, config.n_unscored_interleaved).size() < config.n_unscored_interleaved) {
    throw Error(ErrorCode::infeasible, "too few unscored items for the configured slots");
  }
  const ThetaPrior prior = config.prior_override.value_or(bank.theta_prior);
  if (!(prior.sd > 0.0)) throw Error(ErrorCode::infeasible, "prior sd must be positive");
  config.grid.validate();
}

CoverageLedger CoverageLedger::for_bank(const ItemBank& bank,
                                        const std::vector<std::string>& dimensions) {
  CoverageLedger ledger;
  for (const auto& dim : dimensions) {
    for (const auto& value : bank.vocabularies.at(dim)) ledger.uncovered.insert({dim, value});
  }
  return ledger;
}

std::size_t CoverageLedger::covers(const Item& item) const {
  std::size_t n = 0;
  for (const auto& feature : item.features) n += uncovered.count(feature);
  return n;
}

void CoverageLedger::retire(const Item& item) {
  for (const auto& feature : item.features) uncovered.erase(feature);
}

std::string_view to_string(SessionStatus status) {
  return status == SessionStatus::active ? "active" : "completed";
}

std::size_t SessionState::scored_count() const {
  return static_cast<std::size_t>(std::count_if(administered.begin(), administered.end(),
                                                [](const AdministeredItem& a) { return a.scored; }));
}

std::size_t SessionState::correct_scored_count() const {
  return static_cast<std::size_t>(
      std::count_if(administered.begin(), administered.end(),
                    [](const AdministeredItem& a) { return a.scored && a.correct; }));
}

json score_to_json(const Score& s) {
  return {{"theta_mean", s.theta_mean},
          {"theta_se", s.theta_se},
          {"raw_correctness", s.raw_correctness},
          {"n_scored", s.n_scored},
          {"n_correct", s.n_correct}};
}

Score score_from_json(const json& j) {
  return Score{j.at("theta_mean").get<double>(), j.at("theta_se").get<double>(),
               j.at("raw_correctness").get<double>(), j.at("n_scored").get<std::size_t>(),
               j.at("n_correct").get<std::size_t>()};
}

std::map<std::size_t, std::string> assign_unscored_positions(const SessionConfig& config,
                                                             const ItemBank& bank, Rng& rng) {
  std::map<std::size_t, std::string> out;
  if (config.n_unscored_interleaved == 0) return out;
  auto pool = unscored_pool(bank, config.n_unscored_interleaved);
  if (pool.size() < config.n_unscored_interleaved) {
    throw Error(ErrorCode::infeasible, "too few unscored items for the configured slots");
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> slots = config.unscored_positions;
  std::sort(slots.begin(), slots.end());
  for (std::size_t k = 0; k < slots.size(); ++k) out[slots[k]] = pool[k];
  return out;
}

namespace {

void serve_next(SessionState& state, const ItemBank& bank) {
  const std::size_t position = state.next_position();
  if (position > state.config.total_length()) {
    state.pending_item.reset();
    state.status = SessionStatus::completed;
    return;
  }
  auto slot = state.unscored_assignment.find(position);
  if (slot != state.unscored_assignment.end()) {
    state.pending_item = slot->second;
    state.used[*bank.find(slot->second)] = true;
    return;
  }
  select_next_scored(state, bank);
}

}  // namespace

SessionState start_session(const ItemBank& bank, const SessionConfig& config, std::string session_id) {
  validate_config(config, bank);
  const ThetaPrior prior = config.prior_override.value_or(bank.theta_prior);
  SessionState state{
      .session_id = std::move(session_id),
      .bank_id = bank.bank_id,
      .config = config,
      .posterior = GridPosterior::from_prior(prior.mean, prior.sd, config.grid),
      .administered = {},
      .ledger = CoverageLedger::for_bank(bank, config.covering_dimensions),
      .pending_item = std::nullopt,
      .status = SessionStatus::active,
      .unscored_assignment = {},
      .used = std::vector<bool>(bank.items.size(), false),
  };
  Rng rng(derive_seed(config.rng_seed, 0xa551));
  state.unscored_assignment = assign_unscored_positions(config, bank, rng);
  serve_next(state, bank);
  return state;
}

std::string select_next_scored(SessionState& state, const ItemBank& bank) {
  if (state.status != SessionStatus::active) {
    throw Error(ErrorCode::conflict, "session is completed");
  }
  if (state.pending_item) {
    throw Error(ErrorCode::conflict, "an item is already pending");
  }
  if (state.scored_count() >= state.config.scored_length) {
    throw Error(ErrorCode::conflict, "no scored slots remain");
  }
  const std::size_t remaining = state.config.scored_length - state.scored_count();
  const std::size_t uncovered = state.ledger.uncovered.size();
  const std::size_t required = uncovered >= remaining ? uncovered - remaining + 1 : 0;
  const double theta = state.posterior.mean();

  std::optional<std::size_t> best;
  double best_info = -1.0;
  bool any_available = false;
  for (std::size_t i = 0; i < bank.items.size(); ++i) {
    const Item& item = bank.items[i];
    if (!item.scored() || state.used[i]) continue;
    any_available = true;
    if (required > 0 && state.ledger.covers(item) < required) continue;
    const double info = item_information(theta, *item.params);
    if (!best || info > best_info ||
        (info == best_info && item.item_id < bank.items[*best].item_id)) {
      best = i;
      best_info = info;
    }
  }
  if (!best) {
    if (!any_available) throw Error(ErrorCode::infeasible, "item bank exhausted");
    throw Error(ErrorCode::infeasible, "coverage infeasible");
  }
  const Item& chosen = bank.items[*best];
  state.ledger.retire(chosen);
  state.used[*best] = true;
  state.pending_item = chosen.item_id;
  return chosen.item_id;
}

SessionState submit_answer(SessionState state, const ItemBank& bank, const std::string& item_id,
                           int selected_index) {
  if (state.status == SessionStatus::completed) {
    throw Error(ErrorCode::conflict, "session is completed");
  }
  if (!state.pending_item || *state.pending_item != item_id) {
    throw Error(ErrorCode::conflict, "out-of-order answer");
  }
  const Item& item = bank.at(item_id);
  if (selected_index < 0 || static_cast<std::size_t>(selected_index) >= item.options.size()) {
    throw Error(ErrorCode::invalid_argument, "selected_index out of range");
  }
  const bool correct = selected_index == item.correct_index;
  if (item.scored()) {
    state.posterior.update_in_place({*item.params, correct});
  }
  state.administered.push_back({item_id, selected_index, correct, item.scored()});
  state.pending_item.reset();
  serve_next(state, bank);
  return state;
}

Score final_score(const SessionState& state) {
  if (state.status != SessionStatus::completed) {
    throw Error(ErrorCode::conflict, "not terminated");
  }
  Score s;
  s.theta_mean = state.posterior.mean();
  s.theta_se = state.posterior.sd();
  s.n_scored = state.scored_count();
  s.n_correct = state.correct_scored_count();
  s.raw_correctness = s.n_scored == 0 ? 0.0 : static_cast<double>(s.n_correct) / s.n_scored;
  return s;
}

}  // namespace adaptest
