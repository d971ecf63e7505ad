#include "adaptest/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adaptest/error.hpp"
#include "adaptest/random.hpp"
#include "adaptest/stats.hpp"

namespace adaptest {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

struct Obs {
  std::size_t other;  // person index for item lists, item index for person lists
  bool correct;
};

// Parameter layout: a_0, b_0, a_1, b_1, ..., then theta_0, theta_1, ...
class TwoPlTarget final : public BlockedTarget {
 public:
  TwoPlTarget(const ResponseMatrix& m, const std::vector<std::size_t>& scored, const CalibrationPriors& priors)
      : priors_(priors), n_items_(scored.size()), by_item_(scored.size()), by_person_(m.n_persons()) {
    for (std::size_t k = 0; k < scored.size(); ++k) {
      for (std::size_t j = 0; j < m.n_persons(); ++j) {
        const Cell c = m.at(j, scored[k]);
        if (c == Cell::missing) continue;
        by_item_[k].push_back({j, c == Cell::correct});
        by_person_[j].push_back({k, c == Cell::correct});
      }
    }
    for (std::size_t k = 0; k < scored.size(); ++k) {
      std::size_t right = 0;
      for (const auto& o : by_item_[k]) right += o.correct ? 1 : 0;
      const double n = static_cast<double>(by_item_[k].size());
      const double p = std::clamp((static_cast<double>(right) + 0.5) / (n + 1.0), 0.02, 0.98);
      const std::string& id = m.items[scored[k]];
      specs_.push_back({"a[" + id + "]", Support::positive, 1.0, 0.1});
      specs_.push_back({"b[" + id + "]", Support::real, std::log(p / (1.0 - p)), 0.15});
      blocks_.push_back({2 * k, 2 * k + 1});
    }
    std::vector<double> raw(m.n_persons(), 0.0);
    for (std::size_t j = 0; j < m.n_persons(); ++j) {
      std::size_t right = 0;
      for (const auto& o : by_person_[j]) right += o.correct ? 1 : 0;
      const double n = static_cast<double>(by_person_[j].size());
      const double p = (static_cast<double>(right) + 0.5) / (n + 1.0);
      raw[j] = std::log(p / (1.0 - p));
    }
    const double mu = mean_of(raw);
    const double sd = sd_of(raw) > 0.0 ? sd_of(raw) : 1.0;
    for (std::size_t j = 0; j < m.n_persons(); ++j) {
      const double init = priors.theta_mean + priors.theta_sd * std::clamp((raw[j] - mu) / sd, -3.0, 3.0);
      specs_.push_back({"theta[" + m.persons[j] + "]", Support::real, init, 0.5});
      blocks_.push_back({2 * n_items_ + j});
    }
  }

  const std::vector<ParameterSpec>& parameters() const override { return specs_; }
  std::size_t block_count() const override { return blocks_.size(); }
  std::span<const std::size_t> block(std::size_t b) const override { return blocks_[b]; }

  double block_log_density(std::size_t b, std::span<const double> v) const override {
    if (b < n_items_) {
      const double a = v[2 * b];
      const double e = v[2 * b + 1];
      if (!(a > 0.0)) return kNegInf;
      const double la = (std::log(a) - priors_.log_a_mean) / priors_.log_a_sd;
      const double zb = (e - priors_.b_mean) / priors_.b_sd;
      double lp = -std::log(a) - 0.5 * la * la - 0.5 * zb * zb;
      const double* theta = v.data() + 2 * n_items_;
      for (const auto& o : by_item_[b]) {
        const double z = a * (theta[o.other] + e);
        lp += log_sigmoid(o.correct ? z : -z);
      }
      return lp;
    }
    const std::size_t j = b - n_items_;
    const double t = v[2 * n_items_ + j];
    const double zt = (t - priors_.theta_mean) / priors_.theta_sd;
    double lp = -0.5 * zt * zt;
    for (const auto& o : by_person_[j]) {
      const double z = v[2 * o.other] * (t + v[2 * o.other + 1]);
      lp += log_sigmoid(o.correct ? z : -z);
    }
    return lp;
  }

  const std::vector<Obs>& responses_for_item(std::size_t k) const { return by_item_[k]; }

 private:
  CalibrationPriors priors_;
  std::size_t n_items_;
  std::vector<std::vector<Obs>> by_item_;
  std::vector<std::vector<Obs>> by_person_;
  std::vector<ParameterSpec> specs_;
  std::vector<std::vector<std::size_t>> blocks_;
};

Moments moments_of(const McmcRun& run, std::size_t k) {
  const auto xs = run.pooled(k);
  return {mean_of(xs), sd_of(xs)};
}

double finite_or(double x, double fallback) { return std::isfinite(x) ? x : fallback; }

}  // namespace

CalibrationResult fit_2pl(const ResponseMatrix& matrix, const CalibrationPriors& priors,
                          const McmcConfig& config) {
  matrix.validate();
  if (!(priors.log_a_sd > 0.0) || !(priors.b_sd > 0.0) || !(priors.theta_sd > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "prior scales must be positive");
  }
  CalibrationResult result;
  std::vector<std::size_t> scored;
  for (std::size_t i = 0; i < matrix.n_items(); ++i) {
    if (matrix.kinds[i] == ItemKind::scored) {
      scored.push_back(i);
    } else {
      result.excluded_items.push_back(matrix.items[i]);
    }
  }
  if (scored.size() < 2) throw Error(ErrorCode::validation, "calibration needs at least 2 scored items");
  if (matrix.n_persons() < 10) throw Error(ErrorCode::validation, "calibration needs at least 10 persons");

  const TwoPlTarget target(matrix, scored, priors);
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (target.responses_for_item(k).empty()) {
      throw Error(ErrorCode::validation, "item '" + matrix.items[scored[k]] + "' has no responses");
    }
  }
  McmcRun run = run_blocked(target, config);

  result.max_rhat = 0.0;
  result.min_ess_bulk = result.min_ess_tail = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < run.names.size(); ++p) {
    result.max_rhat = std::max(result.max_rhat, finite_or(run.rhat[p], 0.0));
    result.min_ess_bulk = std::min(result.min_ess_bulk, finite_or(run.ess_bulk[p], result.min_ess_bulk));
    result.min_ess_tail = std::min(result.min_ess_tail, finite_or(run.ess_tail[p], result.min_ess_tail));
  }

  for (std::size_t k = 0; k < scored.size(); ++k) {
    ItemCalibration ic;
    ic.item_id = matrix.items[scored[k]];
    ic.a = moments_of(run, 2 * k);
    ic.b = moments_of(run, 2 * k + 1);
    ic.rhat_a = run.rhat[2 * k];
    ic.rhat_b = run.rhat[2 * k + 1];
    const auto& obs = target.responses_for_item(k);
    ic.n_responses = obs.size();
    const auto right = std::count_if(obs.begin(), obs.end(), [](const Obs& o) { return o.correct; });
    ic.quasi_separated = right == 0 || static_cast<std::size_t>(right) == obs.size();
    if (ic.quasi_separated) result.warnings.push_back("item '" + ic.item_id + "' is quasi-separated");
    result.items.push_back(std::move(ic));
  }
  for (std::size_t j = 0; j < matrix.n_persons(); ++j) {
    result.persons.push_back({matrix.persons[j], moments_of(run, 2 * scored.size() + j)});
  }
  result.acceptance_rates = run.acceptance_rates;
  result.warnings.insert(result.warnings.end(), run.warnings.begin(), run.warnings.end());
  return result;
}

nlohmann::json calibration_to_bank_fragment(const CalibrationResult& result) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : result.items) {
    items.push_back({{"item_id", it.item_id}, {"kind", "scored"}, {"params", {{"a", it.a.mean}, {"b", it.b.mean}}}});
  }
  for (const auto& id : result.excluded_items) {
    items.push_back({{"item_id", id}, {"kind", "unscored_normal"}, {"params", nullptr}});
  }
  return {{"items", items}};
}

nlohmann::json calibration_to_json(const CalibrationResult& result) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : result.items) {
    items.push_back({{"item_id", it.item_id},
                     {"a", {{"mean", it.a.mean}, {"sd", it.a.sd}}},
                     {"b", {{"mean", it.b.mean}, {"sd", it.b.sd}}},
                     {"rhat_a", it.rhat_a},
                     {"rhat_b", it.rhat_b},
                     {"n_responses", it.n_responses},
                     {"quasi_separated", it.quasi_separated}});
  }
  nlohmann::json persons = nlohmann::json::array();
  for (const auto& p : result.persons) {
    persons.push_back({{"person_id", p.person_id}, {"theta", {{"mean", p.theta.mean}, {"sd", p.theta.sd}}}});
  }
  return {{"items", items},
          {"persons", persons},
          {"excluded_items", result.excluded_items},
          {"diagnostics",
           {{"max_rhat", result.max_rhat},
            {"min_ess_bulk", result.min_ess_bulk},
            {"min_ess_tail", result.min_ess_tail},
            {"acceptance_rates", result.acceptance_rates}}},
          {"warnings", result.warnings},
          {"bank_fragment", calibration_to_bank_fragment(result)}};
}

std::vector<PersonTheta> estimate_person_thetas(const ResponseMatrix& matrix, const ItemBank& bank,
                                                const ThetaPrior& prior, const GridSpec& grid) {
  matrix.validate();
  // Columns that contribute: scored in the bank (or in the matrix if the bank
  // does not know them, which is an error once answered).
  std::vector<std::optional<ItemParams>> params(matrix.n_items());
  std::vector<bool> skip(matrix.n_items(), false);
  for (std::size_t i = 0; i < matrix.n_items(); ++i) {
    const auto idx = bank.find(matrix.items[i]);
    if (idx) {
      const Item& item = bank.items[*idx];
      if (!item.scored()) skip[i] = true;
      params[i] = item.params;
    } else if (matrix.kinds[i] != ItemKind::scored) {
      skip[i] = true;
    }
  }
  const GridPosterior base = GridPosterior::from_prior(prior.mean, prior.sd, grid);
  std::vector<PersonTheta> out;
  out.reserve(matrix.n_persons());
  for (std::size_t j = 0; j < matrix.n_persons(); ++j) {
    std::vector<Response> responses;
    for (std::size_t i = 0; i < matrix.n_items(); ++i) {
      const Cell c = matrix.at(j, i);
      if (skip[i] || c == Cell::missing) continue;
      if (!params[i]) {
        throw Error(ErrorCode::validation, "item '" + matrix.items[i] + "' has no parameters in the bank");
      }
      responses.push_back({*params[i], c == Cell::correct});
    }
    PersonTheta pt;
    pt.person_id = matrix.persons[j];
    pt.n_responses = responses.size();
    if (responses.empty()) {
      pt.mean = base.mean();
      pt.sd = base.sd();
      pt.prior_only = true;
    } else {
      const auto post = posterior_from_responses(prior.mean, prior.sd, responses, grid);
      pt.mean = post.mean();
      pt.sd = post.sd();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

FeatureCorrelation feature_correlations(const ResponseMatrix& matrix, const ItemBank& bank,
                                        const std::string& dimension, const McmcConfig& config) {
  ResponseMatrix m = matrix;
  apply_item_kinds(m, bank);
  const auto& values = feature_values(bank, dimension);

  FeatureCorrelation fc;
  std::vector<std::vector<PersonTheta>> estimates;
  for (const auto& value : values) {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < m.n_items(); ++i) {
      const Item& item = bank.at(m.items[i]);
      const auto f = item.features.find(dimension);
      if (item.scored() && f != item.features.end() && f->second == value) cols.push_back(i);
    }
    if (cols.size() < 2) {
      fc.warnings.push_back("feature '" + value + "' has fewer than 2 scored items; excluded");
      continue;
    }
    std::vector<std::string> ids;
    for (std::size_t i : cols) ids.push_back(m.items[i]);
    ResponseMatrix sub(m.persons, ids);
    for (std::size_t j = 0; j < m.n_persons(); ++j) {
      for (std::size_t k = 0; k < cols.size(); ++k) sub.set(j, k, m.at(j, cols[k]));
    }
    fc.features.push_back(value);
    estimates.push_back(estimate_person_thetas(sub, bank, bank.theta_prior));
  }

  const std::size_t f = fc.features.size();
  fc.median.assign(f, std::vector<double>(f, 1.0));
  fc.lo95 = fc.median;
  fc.hi95 = fc.median;
  std::size_t pair = 0;
  for (std::size_t x = 0; x < f; ++x) {
    for (std::size_t y = x + 1; y < f; ++y, ++pair) {
      std::vector<PairedScores> data;
      for (std::size_t j = 0; j < m.n_persons(); ++j) {
        data.push_back({m.persons[j], estimates[x][j].mean, estimates[x][j].sd, estimates[y][j].mean,
                        estimates[y][j].sd});
      }
      McmcConfig mc = config;
      mc.seed = derive_seed(config.seed, pair);
      const auto fit = fit_validity_model(data, ValidityPriors{}, mc);
      const auto& rho = fit.summaries.at("rho");
      fc.median[x][y] = fc.median[y][x] = rho.median;
      fc.lo95[x][y] = fc.lo95[y][x] = rho.lo95;
      fc.hi95[x][y] = fc.hi95[y][x] = rho.hi95;
      for (const auto& w : fit.run.warnings) fc.warnings.push_back(fc.features[x] + "/" + fc.features[y] + ": " + w);
    }
  }
  return fc;
}

nlohmann::json feature_correlation_to_json(const FeatureCorrelation& fc) {
  return {{"features", fc.features},
          {"median", fc.median},
          {"lo95", fc.lo95},
          {"hi95", fc.hi95},
          {"warnings", fc.warnings}};
}

ResponseMatrix simulate_response_matrix(const ItemBank& bank, const std::vector<double>& thetas,
                                        std::uint64_t seed) {
  std::vector<std::string> persons;
  for (std::size_t j = 0; j < thetas.size(); ++j) persons.push_back("P" + std::to_string(j + 1));
  std::vector<std::string> ids;
  for (const auto& item : bank.items) ids.push_back(item.item_id);
  ResponseMatrix m(std::move(persons), std::move(ids));
  apply_item_kinds(m, bank);
  Rng rng(derive_seed(seed, 0x3a7));
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    for (std::size_t i = 0; i < bank.items.size(); ++i) {
      const Item& item = bank.items[i];
      const double p = item.scored() ? prob_correct(thetas[j], *item.params) : 0.5;
      m.set(j, i, uniform01(rng) < p ? Cell::correct : Cell::incorrect);
    }
  }
  return m;
}

}  // namespace adaptest
