// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "adaptest/calibration.hpp"
#include "adaptest/cat_engine.hpp"
#include "adaptest/eval_models.hpp"
#include "adaptest/irt.hpp"
#include "adaptest/mcmc.hpp"
#include "adaptest/service.hpp"
#include "adaptest/simulation.hpp"
#include "adaptest/stats.hpp"
#include "adaptest/transcript.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace adaptest;
using nlohmann::json;

namespace {

// Pinned tolerances.
constexpr double kOracleTol = 1e-4;
constexpr double kOracleSeconds = 1.0;
constexpr double kAnalyticTol = 1e-9;
constexpr std::size_t kCoverageSequences = 1000;
constexpr double kSweepJitter = 0.01;
constexpr double kSweepMedianAt27 = 0.25;
constexpr double kSweepSeconds = 300.0;
constexpr double kCalviMedianAt11 = 0.10;
constexpr double kCalCorrB = 0.95;
constexpr double kCalCorrA = 0.85;
constexpr double kCalRmseB = 0.25;
constexpr double kCalRmseA = 0.35;
constexpr double kCalRhat = 1.05;
constexpr double kCalSeconds = 600.0;
constexpr double kIccTruth = 0.90;
constexpr double kIccTol = 0.07;
constexpr double kRhoTruth = 0.8;
constexpr double kRhoTol = 0.07;
constexpr std::size_t kValidityReplicates = 20;
constexpr double kValidityCoverage = 0.90;
constexpr std::size_t kDefaultKept = 8000;
constexpr double kNormalMomentTol = 0.05;
constexpr double kRhatMax = 1.01;
constexpr double kEssMin = 6000.0;
constexpr double kRecoveryMedianMax = 5.0;

// Seeded benchmark inputs.
constexpr std::uint64_t kBankSeed = 1;
constexpr std::uint64_t kPersonSeed = 1;
constexpr std::size_t kPersons = 500;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 ---------------------------------------------------------------------

Outcome grid_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> a_dist(0.4, 2.5), b_dist(-2.5, 2.5), u;
  std::uniform_int_distribution<int> len_dist(1, 53);
  std::normal_distribution<double> z;
  double worst = 0.0, grid_seconds = 0.0;
  for (int s = 0; s < 100; ++s) {
    const double prior_mean = s % 2 ? -1.0 : 0.0;
    const double theta = prior_mean + z(rng);
    std::vector<Response> responses;
    std::vector<oracle::Obs> obs;
    for (int k = len_dist(rng); k > 0; --k) {
      const ItemParams p{a_dist(rng), b_dist(rng)};
      const bool correct = u(rng) < prob_correct(theta, p);
      responses.push_back({p, correct});
      obs.push_back({p.discrimination, p.easiness, correct});
    }
    const auto t0 = std::chrono::steady_clock::now();
    const GridPosterior post = posterior_from_responses(prior_mean, 1.0, responses);
    grid_seconds += seconds_since(t0);
    const auto ref = oracle::posterior(prior_mean, 1.0, obs);
    worst = std::max({worst, std::abs(post.mean() - static_cast<double>(ref.mean)),
                      std::abs(post.sd() - static_cast<double>(ref.sd))});
  }
  return {worst < kOracleTol && grid_seconds <= kOracleSeconds,
          fmt("max |grid - oracle| = %.2e over 100 sequences, grid time %.3f s", worst, grid_seconds)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome analytic_identities() {
  double worst = 0.0;
  bool peak_is_max = true;
  const std::vector<ItemParams> cases{{1.0, 0.0}, {0.3, -2.0}, {2.7, 1.4}, {1.6, -0.35}, {4.0, 3.0}};
  for (const auto& p : cases) {
    const double at = -p.easiness;
    worst = std::max(worst, std::abs(prob_correct(at, p) - 0.5));
    worst = std::max(worst, std::abs(item_information(at, p) - p.discrimination * p.discrimination / 4.0));
    for (double d : {-0.5, -0.01, 0.01, 0.5}) peak_is_max &= item_information(at + d, p) < item_information(at, p);
  }
  for (double theta : {-3.0, -0.4, 0.0, 1.1, 2.5}) {
    const double se = standard_error(theta, cases);
    worst = std::max(worst, std::abs(se * std::sqrt(test_information(theta, cases)) - 1.0));
  }
  return {worst < kAnalyticTol && peak_is_max, fmt("max deviation %.2e, peak is a maximum: %s", worst,
                                                   peak_is_max ? "yes" : "no")};
}

// ---- 3 ---------------------------------------------------------------------

std::size_t coverage_violations(const ItemBank& bank, std::size_t length, std::size_t sequences,
                                std::uint64_t seed) {
  SessionConfig base = default_session_config(bank);
  base.scored_length = length;
  std::set<FeaturePair> all;
  for (const auto& item : bank.items) {
    if (!item.scored()) continue;
    for (const auto& dim : base.covering_dimensions) all.insert({dim, item.features.at(dim)});
  }
  std::mt19937_64 rng(seed);
  std::size_t violations = 0;
  for (std::size_t s = 0; s < sequences; ++s) {
    SessionConfig c = base;
    c.rng_seed = s;
    SessionState state = start_session(bank, c);
    while (state.status == SessionStatus::active) {
      const Item& item = bank.at(*state.pending_item);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(item.options.size()) - 1);
      state = submit_answer(std::move(state), bank, item.item_id, pick(rng));
    }
    std::set<FeaturePair> seen;
    for (const auto& a : state.administered) {
      const Item& item = bank.at(a.item_id);
      if (!item.scored()) continue;
      for (const auto& dim : c.covering_dimensions) seen.insert({dim, item.features.at(dim)});
    }
    if (seen != all || state.scored_count() != length) ++violations;
  }
  return violations;
}

Outcome content_balancing() {
  const ItemBank vlat = synth_bank(kBankSeed, SynthSpec::vlat_defaults());
  const ItemBank calvi = synth_bank(kBankSeed, SynthSpec::calvi_defaults());
  const std::size_t v = coverage_violations(vlat, 27, kCoverageSequences, 301);
  const std::size_t c = coverage_violations(calvi, 11, kCoverageSequences, 302);
  return {v == 0 && c == 0, fmt("violations: vlat_like L=27 %zu/%zu, calvi_like L=11 %zu/%zu", v,
                                kCoverageSequences, c, kCoverageSequences)};
}

// ---- 4 ---------------------------------------------------------------------

Outcome vlat_sweep() {
  const ItemBank vlat = synth_bank(kBankSeed, SynthSpec::vlat_defaults());
  const auto persons = draw_persons(kPersons, vlat.theta_prior.mean, vlat.theta_prior.sd, kPersonSeed);
  const auto t0 = std::chrono::steady_clock::now();
  const SweepResult r = sweep_lengths(vlat, parse_lengths("19:53"), persons, Baseline::full_bank);
  const double secs = seconds_since(t0);
  bool zero_at_53 = true;
  for (double v : r.values.back()) zero_at_53 &= v == 0.0;
  zero_at_53 &= r.lengths.back() == 53;
  double worst_rise = 0.0;
  for (std::size_t k = 1; k < r.summaries.size(); ++k) {
    worst_rise = std::max(worst_rise, r.summaries[k].median - r.summaries[k - 1].median);
  }
  const auto at27 = std::find(r.lengths.begin(), r.lengths.end(), 27) - r.lengths.begin();
  const double median27 = r.summaries[at27].median;
  return {zero_at_53 && worst_rise <= kSweepJitter && median27 < kSweepMedianAt27 && secs < kSweepSeconds,
          fmt("exact zero at L=53: %s, largest median rise %.4f, median at L=27 %.4f, %.1f s",
              zero_at_53 ? "yes" : "no", worst_rise, median27, secs)};
}

// ---- 5 ---------------------------------------------------------------------

Outcome calvi_sweep() {
  const ItemBank calvi = synth_bank(kBankSeed, SynthSpec::calvi_defaults());
  const auto persons = draw_persons(kPersons, calvi.theta_prior.mean, calvi.theta_prior.sd, kPersonSeed);
  const SweepResult r = sweep_lengths(calvi, parse_lengths("11:20"), persons, Baseline::static_reference);
  double worst_13_up = -1e9;
  double median11 = 0.0;
  for (std::size_t k = 0; k < r.lengths.size(); ++k) {
    if (r.lengths[k] == 11) median11 = r.summaries[k].median;
    if (r.lengths[k] >= 13) worst_13_up = std::max(worst_13_up, r.summaries[k].median);
  }
  return {worst_13_up < 0.0 && median11 < kCalviMedianAt11,
          fmt("largest median for L in 13..20: %.4f, median at L=11: %.4f", worst_13_up, median11)};
}

// ---- 6 ---------------------------------------------------------------------

Outcome calibration_recovery() {
  const ItemBank vlat = synth_bank(kBankSeed, SynthSpec::vlat_defaults());
  std::vector<double> thetas;
  for (const auto& p : draw_persons(kPersons, 0.0, 1.0, kPersonSeed)) thetas.push_back(p.true_theta);
  const ResponseMatrix m = simulate_response_matrix(vlat, thetas, 61);
  McmcConfig config;
  config.seed = 62;
  const auto t0 = std::chrono::steady_clock::now();
  const CalibrationResult r = fit_2pl(m, {}, config);
  const double secs = seconds_since(t0);
  std::vector<double> ta, tb, ea, eb;
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const ItemParams& p = *vlat.at(r.items[i].item_id).params;
    ta.push_back(p.discrimination);
    tb.push_back(p.easiness);
    ea.push_back(r.items[i].a.mean);
    eb.push_back(r.items[i].b.mean);
    sa += (ea.back() - ta.back()) * (ea.back() - ta.back());
    sb += (eb.back() - tb.back()) * (eb.back() - tb.back());
  }
  const double n = static_cast<double>(r.items.size());
  const double cb = pearson(tb, eb), ca = pearson(ta, ea);
  const double rb = std::sqrt(sb / n), ra = std::sqrt(sa / n);
  return {cb > kCalCorrB && ca > kCalCorrA && rb < kCalRmseB && ra < kCalRmseA && r.max_rhat < kCalRhat &&
              r.items.size() == 53 && secs < kCalSeconds,
          fmt("corr b %.4f, corr a %.4f, RMSE b %.4f, RMSE a %.4f, max R-hat %.4f, %.0f s", cb, ca, rb, ra,
              r.max_rhat, secs)};
}

// ---- 7 ---------------------------------------------------------------------

Outcome icc_recovery() {
  McmcConfig config;
  config.seed = 71;
  RetestGenerator g{200, 0.0, 1.0, 0.33, 0.2};
  const auto big = fit_icc_model(simulate_retest(g, 72), {}, config);
  g.n = 60;
  const auto small = fit_icc_model(simulate_retest(g, 73), {}, config);
  const auto& b = big.summaries.at("icc");
  const auto& s = small.summaries.at("icc");
  bool formula = std::abs(icc_from_variances(0.9, 0.3) - 0.9) < 1e-15 && icc_from_variances(0.7, 0.7) == 0.5 &&
                 std::abs(icc_from_variances(1.0, 3.0) - 0.1) < 1e-15;
  try {
    icc_from_variances(1.0, 0.0);
    formula = false;
  } catch (const Error&) {
  }
  return {std::abs(b.median - kIccTruth) <= kIccTol && s.half_width() > b.half_width() && formula,
          fmt("n=200 median %.4f (truth %.2f), CI half-width n=60 %.4f vs n=200 %.4f, formula cases %s", b.median,
              kIccTruth, s.half_width(), b.half_width(), formula ? "exact" : "wrong")};
}

// ---- 8 ---------------------------------------------------------------------

Outcome validity_recovery() {
  const ValidityGenerator g{200, 0.0, 1.0, 1.0, kRhoTruth, 0.15, 0.15};
  double first_median = 0.0;
  std::size_t covered = 0;
  for (std::size_t k = 0; k < kValidityReplicates; ++k) {
    McmcConfig config;
    config.seed = 800 + k;
    const auto fit = fit_validity_model(simulate_validity(g, 900 + k), {}, config);
    const auto& rho = fit.summaries.at("rho");
    if (k == 0) first_median = rho.median;
    if (rho.lo95 <= kRhoTruth && kRhoTruth <= rho.hi95) ++covered;
  }
  const double rate = static_cast<double>(covered) / kValidityReplicates;
  return {std::abs(first_median - kRhoTruth) <= kRhoTol && rate >= kValidityCoverage,
          fmt("median rho %.4f (truth %.2f), 95%% CI coverage %zu/%zu", first_median, kRhoTruth, covered,
              kValidityReplicates)};
}

// ---- 9 ---------------------------------------------------------------------

Outcome mcmc_defaults() {
  McmcConfig config;
  config.seed = 91;
  const McmcRun run =
      run_chains([](std::span<const double> x) { return -0.5 * x[0] * x[0]; }, {{"x", Support::real, 0.0, 1.0}},
                 config);
  const auto s = run.summary(0);
  const bool moments = std::abs(s.mean) < kNormalMomentTol && std::abs(s.sd - 1.0) < kNormalMomentTol;
  return {run.total_kept() == kDefaultKept && moments && run.rhat[0] < kRhatMax && run.ess_bulk[0] > kEssMin,
          fmt("kept %zu, mean %.4f, sd %.4f, R-hat %.4f, bulk ESS %.0f", run.total_kept(), s.mean, s.sd, run.rhat[0],
              run.ess_bulk[0])};
}

// ---- 10 --------------------------------------------------------------------

Outcome recovery_lengths() {
  const ItemBank calvi = synth_bank(kBankSeed, SynthSpec::calvi_defaults());
  SessionConfig c = default_session_config(calvi);
  c.rng_seed = kPersonSeed;
  const auto persons = draw_persons(kPersons, calvi.theta_prior.mean, calvi.theta_prior.sd, kPersonSeed);
  const RecoveryResult r = recovery_analysis(calvi, c, persons, RecoveryRule::printed);
  const auto trace = trace_recovery(std::vector<double>{0.5, 0.8, 0.7}, RecoveryRule::printed);
  const bool hand = trace.size() == 1 && trace[0].mistake_step == 1 && trace[0].recovery_length == std::size_t{1};
  return {std::isfinite(r.median_length) && r.median_length <= kRecoveryMedianMax && hand,
          fmt("median %.2f (sd %.2f, %zu recovered of %zu mistakes), hand trace %s", r.median_length, r.sd_length,
              r.n_recovered, r.n_mistakes, hand ? "matches" : "differs")};
}

// ---- 11 --------------------------------------------------------------------

Outcome unscored_invariance() {
  const ItemBank calvi = synth_bank(kBankSeed, SynthSpec::calvi_defaults());
  std::mt19937_64 rng(111);
  std::size_t sessions = 0, differing = 0, unscored_seen = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SessionConfig c = default_session_config(calvi);
    c.rng_seed = seed;
    std::vector<AnswerRecord> answers;
    SessionState state = start_session(calvi, c);
    while (state.status == SessionStatus::active) {
      const Item& item = calvi.at(*state.pending_item);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(item.options.size()) - 1);
      answers.push_back({item.item_id, pick(rng)});
      state = submit_answer(std::move(state), calvi, item.item_id, answers.back().selected_index);
    }
    const auto base = replay_answers(calvi, c, "s", answers);
    for (int shift = 1; shift < 4; ++shift) {
      auto mutated = answers;
      for (auto& a : mutated) {
        const Item& item = calvi.at(a.item_id);
        if (item.scored()) continue;
        a.selected_index = (a.selected_index + shift) % static_cast<int>(item.options.size());
        ++unscored_seen;
      }
      const auto other = replay_answers(calvi, c, "s", mutated);
      ++sessions;
      bool same = other.size() == base.size();
      for (std::size_t k = 0; same && k < base.size(); ++k) {
        same = base[k].posterior.mean() == other[k].posterior.mean() &&
               base[k].posterior.sd() == other[k].posterior.sd() && base[k].pending_item == other[k].pending_item;
      }
      if (!same) ++differing;
    }
  }
  return {differing == 0 && unscored_seen > 0,
          fmt("%zu mutated transcripts (%zu unscored answers changed), %zu with a different trajectory", sessions,
              unscored_seen, differing)};
}

// ---- 12 --------------------------------------------------------------------

struct BodyScan {
  std::mutex mutex;
  std::size_t bodies = 0;
  std::size_t leaks = 0;
  void add(const std::string& body) {
    std::lock_guard lock(mutex);
    ++bodies;
    for (const char* f : {"correct_index", "params", "kind"}) {
      if (body.find(f) != std::string::npos) ++leaks;
    }
  }
};

struct LiveSession {
  std::string id;
  json item;
  std::size_t acknowledged = 0;
};

Outcome service_durability() {
  const auto dir = testutil::temp_dir("acceptance-service");
  const ItemBank calvi = synth_bank(kBankSeed, SynthSpec::calvi_defaults());
  const ItemBank vlat = synth_bank(kBankSeed, SynthSpec::vlat_defaults());
  save_bank(calvi, dir / "calvi.json");
  save_bank(vlat, dir / "vlat.json");
  {
    std::ofstream out(dir / "service.json");
    out << json{{"host", "127.0.0.1"},
                {"port", 0},
                {"data_dir", "data"},
                {"banks", {"calvi.json", "vlat.json"}},
                {"layout_seed", 12}}
               .dump();
  }
  const std::string token = "acceptance-token";
  ::setenv(kAdminTokenEnv, token.c_str(), 1);
  const std::vector<std::string> argv{ADAPTEST_CLI_PATH, "serve", "--config", (dir / "service.json").string()};

  BodyScan scan;
  std::vector<LiveSession> sessions(8);
  std::vector<std::string> problems;
  auto post = [&](httplib::Client& c, const std::string& path, const json& body) {
    auto r = c.Post(path, body.dump(), "application/json");
    if (r) scan.add(r->body);
    return r;
  };

  // First run: answer concurrently and kill -9 mid-stream.
  {
    testutil::Child server(argv, dir / "serve1.log");
    const int port = server.wait_for_port();
    if (port <= 0) return {false, "server did not start"};
    for (std::size_t k = 0; k < sessions.size(); ++k) {
      httplib::Client c("127.0.0.1", port);
      auto r = post(c, "/api/v1/sessions", {{"bank_id", k % 2 ? vlat.bank_id : calvi.bank_id}});
      if (!r || r->status != 201) return {false, "session create failed"};
      const json body = json::parse(r->body);
      sessions[k].id = body.at("session_id");
      sessions[k].item = body.at("item");
    }
    std::atomic<bool> stop{false};
    std::vector<std::thread> workers;
    for (auto& s : sessions) {
      workers.emplace_back([&, port] {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(5, 0);
        while (!stop && !s.item.is_null()) {
          auto r = post(c, "/api/v1/sessions/" + s.id + "/answers",
                        {{"item_id", s.item.at("item_id")}, {"selected_index", 0}});
          if (!r || r->status != 200) return;
          ++s.acknowledged;
          s.item = json::parse(r->body).value("next_item", json(nullptr));
          std::this_thread::sleep_for(std::chrono::milliseconds(3));
        }
      });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    server.kill(SIGKILL);
    stop = true;
    for (auto& w : workers) w.join();
  }

  // Second run: every acknowledged answer must be there.
  testutil::Child server(argv, dir / "serve2.log");
  const int port = server.wait_for_port();
  if (port <= 0) return {false, "server did not restart"};
  httplib::Client c("127.0.0.1", port);
  std::size_t lost = 0, acknowledged = 0, partial = 0;
  for (auto& s : sessions) {
    acknowledged += s.acknowledged;
    auto r = c.Get("/api/v1/sessions/" + s.id);
    if (!r || r->status != 200) {
      problems.push_back("session " + s.id + " missing after restart");
      continue;
    }
    scan.add(r->body);
    const json body = json::parse(r->body);
    const std::size_t answered = body.at("progress").at("answered");
    if (answered < s.acknowledged) lost += s.acknowledged - answered;
    if (answered > s.acknowledged + 1) problems.push_back("session " + s.id + " has unacknowledged extra answers");
    if (s.acknowledged < static_cast<std::size_t>(body.at("progress").at("total"))) ++partial;
    // An answer may have landed without its acknowledgement; continue from the server's view.
    s.item = body.value("item", json(nullptr));
  }

  // Out-of-order answer and finishing every session.
  std::size_t out_of_order_status = 0;
  for (auto& s : sessions) {
    if (!s.item.is_null() && out_of_order_status == 0) {
      const std::string wrong = s.item.at("item_id") == "X" ? "Y" : "X";
      auto r = post(c, "/api/v1/sessions/" + s.id + "/answers", {{"item_id", wrong}, {"selected_index", 0}});
      out_of_order_status = r ? r->status : 0;
    }
    while (!s.item.is_null()) {
      auto r = post(c, "/api/v1/sessions/" + s.id + "/answers", {{"item_id", s.item.at("item_id")}, {"selected_index", 1}});
      if (!r || r->status != 200) {
        problems.push_back("answer rejected after restart: " + (r ? std::to_string(r->status) + " " + r->body : "no response"));
        break;
      }
      s.item = json::parse(r->body).value("next_item", json(nullptr));
    }
    auto done = post(c, "/api/v1/sessions/" + s.id + "/answers", {{"item_id", "X"}, {"selected_index", 0}});
    if (!done || done->status != 409) problems.push_back("answer after completion not rejected");
    auto result = c.Get("/api/v1/sessions/" + s.id + "/result");
    if (result) scan.add(result->body);
    if (!result || result->status != 200) problems.push_back("result unavailable");
  }
  const httplib::Headers admin{{kAdminTokenHeader, token}};
  for (const std::string& path : std::vector<std::string>{"/api/v1/banks", "/api/v1/admin/sessions?bank_id=" + calvi.bank_id,
                                 "/api/v1/admin/sessions/" + sessions[0].id + "/transcript"}) {
    auto r = c.Get(path, admin);
    if (!r || r->status != 200) problems.push_back("admin endpoint failed: " + path);
    if (r) scan.add(r->body);
  }
  server.kill(SIGTERM);
  std::filesystem::remove_all(dir);

  const bool pass = lost == 0 && problems.empty() && scan.leaks == 0 && out_of_order_status == 409 && partial > 0;
  std::string detail = fmt("%zu acknowledged answers before kill -9 (%zu sessions interrupted), %zu lost; "
                           "%zu bodies scanned, %zu with forbidden fields; out-of-order status %zu",
                           acknowledged, partial, lost, scan.bodies, scan.leaks, out_of_order_status);
  for (const auto& p : problems) detail += "; " + p;
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"grid posterior matches the quadrature oracle", grid_oracle},
      {"analytic identities", analytic_identities},
      {"content balancing coverage", content_balancing},
      {"vlat_like length sweep", vlat_sweep},
      {"calvi_like sweep against the static reference", calvi_sweep},
      {"calibration recovery at the default config", calibration_recovery},
      {"ICC generative recovery", icc_recovery},
      {"validity generative recovery", validity_recovery},
      {"MCMC defaults and diagnostics", mcmc_defaults},
      {"recovery-length analysis", recovery_lengths},
      {"unscored-item invariance", unscored_invariance},
      {"service durability and response hygiene", service_durability},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %s: %s [%s] (%.1f s)\n", number, o.pass ? "PASS" : "FAIL", criteria[k].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
