#include "adaptest/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "adaptest/error.hpp"
#include "adaptest/random.hpp"

namespace adaptest {

namespace {

int answer_for(const SimulatedPerson& person, const Item& item) {
  if (!item.scored()) return 0;
  const bool correct = simulate_response(person, item);
  if (correct) return item.correct_index;
  return (item.correct_index + 1) % static_cast<int>(item.options.size());
}

struct Estimate {
  double theta = 0.0;
  double se = 0.0;
};

// Posterior from `item_ids` answered by `person`, taken in bank order, and the
// information-based SE at its mean.
Estimate canonical_estimate(const ItemBank& bank, const SimulatedPerson& person,
                            const std::vector<bool>& included, const GridSpec& grid) {
  std::vector<Response> responses;
  std::vector<ItemParams> params;
  for (std::size_t i = 0; i < bank.items.size(); ++i) {
    if (!included[i]) continue;
    const Item& item = bank.items[i];
    responses.push_back({*item.params, simulate_response(person, item)});
    params.push_back(*item.params);
  }
  const auto post =
      posterior_from_responses(bank.theta_prior.mean, bank.theta_prior.sd, responses, grid);
  return {post.mean(), standard_error(post.mean(), params)};
}

LengthSummary summarize(std::size_t length, const std::vector<double>& xs) {
  return {length, median_of(xs), central_interval(xs, 0.66), central_interval(xs, 0.95)};
}

}  // namespace

std::vector<SimulatedPerson> draw_persons(std::size_t n, double mean, double sd, std::uint64_t seed) {
  if (!(sd > 0.0) || !std::isfinite(mean)) {
    throw Error(ErrorCode::invalid_argument, "person distribution needs a finite mean and sd > 0");
  }
  Rng rng(derive_seed(seed, 0x9e75));
  std::normal_distribution<double> z(mean, sd);
  std::vector<SimulatedPerson> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) out.push_back({z(rng), derive_seed(seed, j + 1)});
  return out;
}

bool simulate_response(const SimulatedPerson& person, const Item& item) {
  if (!item.scored() || !item.params) {
    throw Error(ErrorCode::invalid_argument, "cannot simulate a response to unscored item '" + item.item_id + "'");
  }
  Rng rng(derive_seed(person.rng_seed, stable_hash(item.item_id)));
  return uniform01(rng) < prob_correct(person.true_theta, *item.params);
}

double relative_se_difference(double se_adaptive, double se_original) {
  if (!(se_original > 0.0)) throw Error(ErrorCode::invalid_argument, "baseline SE must be positive");
  return (se_adaptive - se_original) / se_original;
}

SessionState run_simulated_session(const ItemBank& bank, const SessionConfig& config,
                                   const SimulatedPerson& person) {
  SessionState state = start_session(bank, config, "sim");
  while (state.status == SessionStatus::active) {
    const Item& item = bank.at(*state.pending_item);
    state = submit_answer(std::move(state), bank, item.item_id, answer_for(person, item));
  }
  return state;
}

std::string_view to_string(Baseline b) {
  return b == Baseline::full_bank ? "full_bank" : "static_reference";
}

Baseline baseline_from_string(std::string_view s) {
  if (s == "full_bank") return Baseline::full_bank;
  if (s == "static_reference") return Baseline::static_reference;
  throw Error(ErrorCode::invalid_argument, "unknown baseline '" + std::string(s) + "'");
}

SweepResult sweep_lengths(const ItemBank& bank, std::span<const std::size_t> lengths,
                          std::span<const SimulatedPerson> persons, Baseline baseline) {
  if (lengths.empty()) throw Error(ErrorCode::invalid_argument, "no lengths to sweep");
  SessionConfig base = default_session_config(bank);
  base.n_unscored_interleaved = 0;
  base.unscored_positions.clear();

  std::vector<SessionConfig> configs;
  for (std::size_t L : lengths) {
    SessionConfig c = base;
    c.scored_length = L;
    validate_config(c, bank);
    configs.push_back(std::move(c));
  }

  std::vector<bool> baseline_items(bank.items.size(), false);
  if (baseline == Baseline::full_bank) {
    for (std::size_t i = 0; i < bank.items.size(); ++i) baseline_items[i] = bank.items[i].scored();
  } else {
    if (!bank.static_reference_ids || bank.static_reference_ids->empty()) {
      throw Error(ErrorCode::invalid_argument, "bank '" + bank.bank_id + "' has no static reference set");
    }
    for (const auto& id : *bank.static_reference_ids) baseline_items[*bank.find(id)] = true;
  }

  SweepResult result;
  result.baseline = baseline;
  result.lengths.assign(lengths.begin(), lengths.end());
  result.values.assign(lengths.size(), std::vector<double>(persons.size(), 0.0));
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const Estimate original = canonical_estimate(bank, persons[p], baseline_items, base.grid);
    for (std::size_t l = 0; l < configs.size(); ++l) {
      const SessionState state = run_simulated_session(bank, configs[l], persons[p]);
      std::vector<bool> administered(bank.items.size(), false);
      for (const auto& a : state.administered) {
        if (a.scored) administered[*bank.find(a.item_id)] = true;
      }
      const Estimate adaptive = canonical_estimate(bank, persons[p], administered, base.grid);
      result.values[l][p] = relative_se_difference(adaptive.se, original.se);
    }
  }
  for (std::size_t l = 0; l < lengths.size(); ++l) {
    if (!persons.empty()) result.summaries.push_back(summarize(lengths[l], result.values[l]));
  }
  return result;
}

std::vector<std::size_t> parse_lengths(const std::string& spec) {
  auto parse_one = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "invalid length '" + s + "'");
    }
    return static_cast<std::size_t>(std::stoul(s));
  };
  std::vector<std::size_t> out;
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::size_t lo = parse_one(spec.substr(0, colon));
    const std::size_t hi = parse_one(spec.substr(colon + 1));
    if (lo > hi) throw Error(ErrorCode::invalid_argument, "empty length range '" + spec + "'");
    for (std::size_t L = lo; L <= hi; ++L) out.push_back(L);
    return out;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    out.push_back(parse_one(spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  const auto old = out.precision(17);
  out << "length,person,rel_se_diff\n";
  for (std::size_t l = 0; l < result.lengths.size(); ++l) {
    for (std::size_t p = 0; p < result.values[l].size(); ++p) {
      out << result.lengths[l] << ',' << p + 1 << ',' << result.values[l][p] << '\n';
    }
  }
  out.precision(old);
}

nlohmann::json sweep_summary_json(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : result.summaries) {
    rows.push_back({{"length", s.length},
                    {"median", s.median},
                    {"interval66", {s.central66.lo, s.central66.hi}},
                    {"interval95", {s.central95.lo, s.central95.hi}}});
  }
  return {{"baseline", to_string(result.baseline)},
          {"n_persons", result.values.empty() ? 0 : result.values.front().size()},
          {"lengths", rows}};
}

std::vector<MistakeRecord> trace_recovery(std::span<const double> d, RecoveryRule rule, std::size_t person) {
  std::vector<MistakeRecord> out;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (!(d[i] > d[i - 1])) continue;
    const double bar = rule == RecoveryRule::printed ? d[i] : d[i - 1];
    MistakeRecord r{person, i, std::nullopt};
    for (std::size_t k = i + 1; k < d.size(); ++k) {
      if (d[k] <= bar) {
        r.recovery_length = k - i;
        break;
      }
    }
    out.push_back(r);
  }
  return out;
}

RecoveryResult recovery_analysis(const ItemBank& bank, const SessionConfig& config,
                                 std::span<const SimulatedPerson> persons, RecoveryRule rule) {
  validate_config(config, bank);
  const ThetaPrior prior = config.prior_override.value_or(bank.theta_prior);
  RecoveryResult result;
  result.rule = rule;
  result.n_persons = persons.size();
  std::vector<double> lengths;
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const double truth = persons[p].true_theta;
    std::vector<double> d = {std::abs(prior.mean - truth)};
    SessionState state = start_session(bank, config, "sim");
    while (state.status == SessionStatus::active) {
      const Item& item = bank.at(*state.pending_item);
      state = submit_answer(std::move(state), bank, item.item_id, answer_for(persons[p], item));
      if (item.scored()) d.push_back(std::abs(state.posterior.mean() - truth));
    }
    for (auto& r : trace_recovery(d, rule, p + 1)) {
      ++result.n_mistakes;
      if (r.censored()) {
        ++result.n_censored;
      } else {
        ++result.n_recovered;
        lengths.push_back(static_cast<double>(*r.recovery_length));
      }
      result.records.push_back(r);
    }
  }
  if (lengths.empty()) {
    result.median_length = result.sd_length = std::numeric_limits<double>::quiet_NaN();
  } else {
    result.median_length = median_of(lengths);
    result.sd_length = sd_of(lengths);
  }
  return result;
}

void write_recovery_csv(const RecoveryResult& result, std::ostream& out) {
  out << "person,mistake_step,recovery_length,censored\n";
  for (const auto& r : result.records) {
    out << r.person << ',' << r.mistake_step << ',';
    if (r.recovery_length) out << *r.recovery_length;
    else out << "NA";
    out << ',' << (r.censored() ? "true" : "false") << '\n';
  }
}

nlohmann::json recovery_summary_json(const RecoveryResult& result) {
  nlohmann::json j = {
      {"rule", result.rule == RecoveryRule::printed ? "printed" : "previous"},
      {"n_persons", result.n_persons},
      {"n_mistakes", result.n_mistakes},
      {"n_recovered", result.n_recovered},
      {"n_censored", result.n_censored},
  };
  j["median_recovery_length"] = std::isfinite(result.median_length) ? nlohmann::json(result.median_length)
                                                                    : nlohmann::json(nullptr);
  j["sd_recovery_length"] = std::isfinite(result.sd_length) ? nlohmann::json(result.sd_length)
                                                            : nlohmann::json(nullptr);
  return j;
}

}  // namespace adaptest
