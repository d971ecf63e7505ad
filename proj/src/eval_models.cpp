#include "adaptest/eval_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "adaptest/error.hpp"
#include "adaptest/random.hpp"
#include "adaptest/stats.hpp"
#include "csv.hpp"

namespace adaptest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454836;

// Log density of (x1, x2) under a zero-mean bivariate Normal with variances
// v1, v2 and covariance c.
double bivariate_normal_logpdf(double x1, double x2, double v1, double v2, double c) {
  const double det = v1 * v2 - c * c;
  if (!(det > 0.0)) return kNegInf;
  const double quad = (v2 * x1 * x1 - 2.0 * c * x1 * x2 + v1 * x2 * x2) / det;
  return -kLogTwoPi - 0.5 * std::log(det) - 0.5 * quad;
}

void check_data(const std::vector<PairedScores>& data, bool require_se) {
  if (data.size() < 3) throw Error(ErrorCode::invalid_argument, "at least 3 persons are required");
  for (const auto& d : data) {
    if (!std::isfinite(d.theta_1) || !std::isfinite(d.theta_2) || !std::isfinite(d.se_1) ||
        !std::isfinite(d.se_2)) {
      throw Error(ErrorCode::validation, "non-finite score for person '" + d.person_id + "'");
    }
    if (require_se && (!(d.se_1 > 0.0) || !(d.se_2 > 0.0))) {
      throw Error(ErrorCode::validation, "standard errors must be positive (person '" + d.person_id + "')");
    }
  }
}

ChainDraws transform_draws(const McmcRun& run, const std::function<double(std::span<const double>)>& f) {
  const std::size_t chains = run.draws.front().size();
  ChainDraws out(chains);
  std::vector<double> values(run.draws.size());
  for (std::size_t c = 0; c < chains; ++c) {
    const std::size_t n = run.draws.front()[c].size();
    out[c].resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < run.draws.size(); ++k) values[k] = run.draws[k][c][t];
      out[c][t] = f(values);
    }
  }
  return out;
}

std::map<std::string, QuantitySummary> summarize_run(const McmcRun& run) {
  std::map<std::string, QuantitySummary> out;
  for (std::size_t k = 0; k < run.names.size(); ++k) out[run.names[k]] = summarize_draws(run.draws[k]);
  return out;
}

nlohmann::json run_to_json(const McmcRun& run, const std::map<std::string, QuantitySummary>& summaries) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, s] : summaries) params[name] = summary_to_json(s);
  return {
      {"parameters", params},
      {"n_chains", run.config.n_chains},
      {"draws_per_chain", run.config.kept_per_chain()},
      {"acceptance_rates", run.acceptance_rates},
      {"warnings", run.warnings},
  };
}

}  // namespace

std::vector<PairedScores> read_paired_scores(const std::filesystem::path& path) {
  const auto rows = csv::read_rows(path.string());
  const std::vector<std::string> expected = {"person_id", "theta_1", "se_1", "theta_2", "se_2"};
  if (rows.empty() || rows.front() != expected) {
    throw Error(ErrorCode::validation, "header must be person_id,theta_1,se_1,theta_2,se_2");
  }
  std::vector<PairedScores> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "line " + std::to_string(r + 1);
    if (row.size() != expected.size()) throw Error(ErrorCode::validation, where + ": expected 5 fields");
    out.push_back({row[0], csv::parse_double(row[1], where), csv::parse_double(row[2], where),
                   csv::parse_double(row[3], where), csv::parse_double(row[4], where)});
  }
  return out;
}

void write_paired_scores(const std::vector<PairedScores>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out.precision(17);
  out << "person_id,theta_1,se_1,theta_2,se_2\n";
  for (const auto& r : rows) {
    out << r.person_id << ',' << r.theta_1 << ',' << r.se_1 << ',' << r.theta_2 << ',' << r.se_2 << '\n';
  }
}

double icc_from_variances(double sigma_alpha, double sigma_epsilon) {
  if (!(sigma_alpha > 0.0) || !(sigma_epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "variance components must be positive");
  }
  const double a2 = sigma_alpha * sigma_alpha;
  return a2 / (a2 + sigma_epsilon * sigma_epsilon);
}

QuantitySummary summarize_draws(const ChainDraws& draws) {
  std::vector<double> pooled;
  for (const auto& c : draws) pooled.insert(pooled.end(), c.begin(), c.end());
  QuantitySummary s;
  s.median = median_of(pooled);
  s.lo95 = quantile(pooled, 0.025);
  s.hi95 = quantile(pooled, 0.975);
  s.mean = mean_of(pooled);
  s.sd = sd_of(pooled);
  s.rhat = s.ess_bulk = s.ess_tail = kNaN;
  if (draws.size() >= 2 && draws.front().size() >= 4) {
    try {
      s.rhat = rhat(draws);
      s.ess_bulk = ess(draws, EssMode::bulk);
      s.ess_tail = ess(draws, EssMode::tail);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical) throw;
    }
  }
  return s;
}

IccPriors IccPriors::for_family(TestFamily family) {
  IccPriors p;
  if (family == TestFamily::calvi_like) p.mu_mean = -1.0;
  return p;
}

double icc_log_likelihood(const std::vector<PairedScores>& data, double mu, double sigma_alpha,
                          double sigma_epsilon, bool ignore_measurement_error) {
  const double a2 = sigma_alpha * sigma_alpha;
  const double shared = a2 + sigma_epsilon * sigma_epsilon;
  double ll = 0.0;
  for (const auto& d : data) {
    const double e1 = ignore_measurement_error ? 0.0 : d.se_1 * d.se_1;
    const double e2 = ignore_measurement_error ? 0.0 : d.se_2 * d.se_2;
    ll += bivariate_normal_logpdf(d.theta_1 - mu, d.theta_2 - mu, shared + e1, shared + e2, a2);
  }
  return ll;
}

IccPosterior fit_icc_model(const std::vector<PairedScores>& data, const IccPriors& priors,
                           const McmcConfig& config) {
  check_data(data, !priors.ignore_measurement_error);
  if (!(priors.mu_sd > 0.0) || !(priors.sigma_alpha_scale > 0.0) || !(priors.sigma_epsilon_scale > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "prior scales must be positive");
  }

  std::vector<double> all, avg, diff;
  for (const auto& d : data) {
    all.push_back(d.theta_1);
    all.push_back(d.theta_2);
    avg.push_back(0.5 * (d.theta_1 + d.theta_2));
    diff.push_back(d.theta_1 - d.theta_2);
  }
  const double sd_avg = std::max(sd_of(avg), 0.05);
  const double sd_diff = std::max(sd_of(diff) / std::numbers::sqrt2, 0.05);
  const double step = 1.0 / std::sqrt(static_cast<double>(data.size()));
  const std::vector<ParameterSpec> specs = {
      {"mu", Support::real, mean_of(all), sd_avg * step},
      {"sigma_alpha", Support::positive, sd_avg, step},
      {"sigma_epsilon", Support::positive, sd_diff, step},
  };

  const LogDensity log_post = [&](std::span<const double> v) {
    const double mu = v[0], sa = v[1], se = v[2];
    if (!(sa > 0.0) || !(se > 0.0)) return kNegInf;
    const double zmu = (mu - priors.mu_mean) / priors.mu_sd;
    const double za = sa / priors.sigma_alpha_scale;
    const double ze = se / priors.sigma_epsilon_scale;
    const double prior = -0.5 * (zmu * zmu + za * za + ze * ze);
    return prior + icc_log_likelihood(data, mu, sa, se, priors.ignore_measurement_error);
  };

  IccPosterior out;
  out.run = run_chains(log_post, specs, config);
  out.icc = transform_draws(out.run, [](std::span<const double> v) {
    const double a2 = v[1] * v[1];
    return a2 / (a2 + v[2] * v[2]);
  });
  out.summaries = summarize_run(out.run);
  out.summaries["icc"] = summarize_draws(out.icc);
  return out;
}

std::vector<PairedScores> center_on_first(const std::vector<PairedScores>& data) {
  double m = 0.0;
  for (const auto& d : data) m += d.theta_1;
  m /= static_cast<double>(data.size());
  std::vector<PairedScores> out = data;
  for (auto& d : out) {
    d.theta_1 -= m;
    d.theta_2 -= m;
  }
  return out;
}

double validity_log_likelihood(const std::vector<PairedScores>& centered, double diff, double sigma_1,
                               double sigma_2, double rho) {
  if (!(sigma_1 > 0.0) || !(sigma_2 > 0.0) || !(std::abs(rho) < 1.0)) return kNegInf;
  const double v1 = sigma_1 * sigma_1;
  const double v2 = sigma_2 * sigma_2;
  const double c = rho * sigma_1 * sigma_2;
  double ll = 0.0;
  for (const auto& d : centered) {
    ll += bivariate_normal_logpdf(d.theta_1, d.theta_2 - diff, v1 + d.se_1 * d.se_1, v2 + d.se_2 * d.se_2, c);
  }
  return ll;
}

ValidityPosterior fit_validity_model(const std::vector<PairedScores>& data, const ValidityPriors& priors,
                                     const McmcConfig& config) {
  check_data(data, false);
  if (!(priors.diff_sd > 0.0) || !(priors.sigma_sd > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "prior scales must be positive");
  }
  ValidityPosterior out;
  double offset = 0.0;
  for (const auto& d : data) offset += d.theta_1;
  out.centering_offset = offset / static_cast<double>(data.size());
  const auto centered = center_on_first(data);

  std::vector<double> t1, t2;
  for (const auto& d : centered) {
    t1.push_back(d.theta_1);
    t2.push_back(d.theta_2);
  }
  const double s1 = std::max(sd_of(t1), 0.05);
  const double s2 = std::max(sd_of(t2), 0.05);
  double r0 = pearson(t1, t2);
  if (!std::isfinite(r0)) r0 = 0.0;
  r0 = std::clamp(r0, -0.9, 0.9);
  const double step = 1.0 / std::sqrt(static_cast<double>(data.size()));
  const std::vector<ParameterSpec> specs = {
      {"diff", Support::real, mean_of(t2), s2 * step},
      {"sigma_original", Support::positive, s1, step},
      {"sigma_adaptive", Support::positive, s2, step},
      {"rho", Support::correlation, r0, step},
  };

  const LogDensity log_post = [&](std::span<const double> v) {
    const double zd = (v[0] - priors.diff_mean) / priors.diff_sd;
    const double z1 = (v[1] - priors.sigma_mean) / priors.sigma_sd;
    const double z2 = (v[2] - priors.sigma_mean) / priors.sigma_sd;
    const double prior = -0.5 * (zd * zd + z1 * z1 + z2 * z2);
    return prior + validity_log_likelihood(centered, v[0], v[1], v[2], v[3]);
  };

  out.run = run_chains(log_post, specs, config);
  out.summaries = summarize_run(out.run);
  return out;
}

std::vector<PairedScores> simulate_retest(const RetestGenerator& g, std::uint64_t seed) {
  if (!(g.sigma_alpha >= 0.0) || !(g.sigma_epsilon >= 0.0) || !(g.se >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "generator scales must be non-negative");
  }
  Rng rng(derive_seed(seed, 0x1cc));
  std::normal_distribution<double> z;
  std::vector<PairedScores> out;
  out.reserve(g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    const double alpha = g.sigma_alpha * z(rng);
    const double t1 = g.mu + alpha + g.sigma_epsilon * z(rng);
    const double t2 = g.mu + alpha + g.sigma_epsilon * z(rng);
    PairedScores p;
    p.person_id = "P" + std::to_string(j + 1);
    p.theta_1 = t1 + g.se * z(rng);
    p.theta_2 = t2 + g.se * z(rng);
    p.se_1 = p.se_2 = g.se;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PairedScores> simulate_validity(const ValidityGenerator& g, std::uint64_t seed) {
  if (!(std::abs(g.rho) <= 1.0)) throw Error(ErrorCode::invalid_argument, "rho must lie in [-1, 1]");
  if (!(g.sigma_1 >= 0.0) || !(g.sigma_2 >= 0.0) || !(g.se_1 >= 0.0) || !(g.se_2 >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "generator scales must be non-negative");
  }
  Rng rng(derive_seed(seed, 0x7a1));
  std::normal_distribution<double> z;
  const double resid = std::sqrt(std::max(0.0, 1.0 - g.rho * g.rho));
  std::vector<PairedScores> out;
  out.reserve(g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    const double z1 = z(rng);
    const double z2 = z(rng);
    PairedScores p;
    p.person_id = "P" + std::to_string(j + 1);
    p.theta_1 = g.sigma_1 * z1 + g.se_1 * z(rng);
    p.theta_2 = g.diff + g.sigma_2 * (g.rho * z1 + resid * z2) + g.se_2 * z(rng);
    p.se_1 = g.se_1;
    p.se_2 = g.se_2;
    out.push_back(std::move(p));
  }
  return out;
}

SampleSizeResult sample_size_simulation(const SampleSizeRequest& request, std::uint64_t seed) {
  if (request.candidate_ns.empty()) throw Error(ErrorCode::invalid_argument, "no candidate sample sizes");
  if (request.replicates < 1) throw Error(ErrorCode::invalid_argument, "replicates must be >= 1");
  auto ns = request.candidate_ns;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  SampleSizeResult result;
  for (std::size_t n : ns) {
    if (n < 3) throw Error(ErrorCode::invalid_argument, "candidate sample sizes must be >= 3");
    SampleSizeRow row;
    row.n = n;
    for (std::size_t r = 0; r < request.replicates; ++r) {
      const std::uint64_t data_seed = derive_seed(derive_seed(seed, n), r);
      McmcConfig mc = request.mcmc;
      mc.seed = derive_seed(data_seed, 0x5eed);
      if (request.target == SampleSizeTarget::icc) {
        RetestGenerator g = request.retest;
        g.n = n;
        const auto fit = fit_icc_model(simulate_retest(g, data_seed), request.icc_priors, mc);
        row.half_widths.push_back(fit.summaries.at("icc").half_width());
      } else {
        ValidityGenerator g = request.validity;
        g.n = n;
        const auto fit = fit_validity_model(simulate_validity(g, data_seed), request.validity_priors, mc);
        row.half_widths.push_back(fit.summaries.at("rho").half_width());
      }
    }
    row.median_half_width = median_of(row.half_widths);
    if (result.first_n_meeting_target == 0 && row.median_half_width <= request.target_half_width) {
      result.first_n_meeting_target = n;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

nlohmann::json summary_to_json(const QuantitySummary& s) {
  return {{"median", s.median}, {"ci95", {s.lo95, s.hi95}}, {"mean", s.mean}, {"sd", s.sd},
          {"rhat", s.rhat},     {"ess_bulk", s.ess_bulk},   {"ess_tail", s.ess_tail}};
}

nlohmann::json to_json(const IccPosterior& p) {
  auto j = run_to_json(p.run, p.summaries);
  j["model"] = "icc";
  return j;
}

nlohmann::json to_json(const ValidityPosterior& p) {
  auto j = run_to_json(p.run, p.summaries);
  j["model"] = "validity";
  j["centering_offset"] = p.centering_offset;
  return j;
}

nlohmann::json to_json(const SampleSizeResult& r, const SampleSizeRequest& request) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"n", row.n}, {"median_half_width", row.median_half_width}, {"half_widths", row.half_widths}});
  }
  nlohmann::json j = {
      {"target", request.target == SampleSizeTarget::icc ? "icc" : "rho"},
      {"target_half_width", request.target_half_width},
      {"replicates", request.replicates},
      {"rows", rows},
  };
  j["first_n_meeting_target"] = r.first_n_meeting_target == 0 ? nlohmann::json(nullptr)
                                                              : nlohmann::json(r.first_n_meeting_target);
  return j;
}

}  // namespace adaptest
