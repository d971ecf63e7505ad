// Operator command line: bank tooling, simulation studies, calibration,
// evaluation models, the HTTP service and transcript replay.
//
// Exit codes: 0 success, 1 runtime error, 2 validation error, 64 usage error.

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptest/calibration.hpp"
#include "adaptest/cat_engine.hpp"
#include "adaptest/error.hpp"
#include "adaptest/eval_models.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/response_matrix.hpp"
#include "adaptest/service.hpp"
#include "adaptest/simulation.hpp"
#include "adaptest/transcript.hpp"

namespace {

using namespace adaptest;
using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;
constexpr int kExitUsage = 64;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = "-";
  std::string format;
};

struct McmcFlags {
  std::size_t chains = 4;
  std::size_t iterations = 20000;
  std::size_t warmup = 10000;
  std::size_t thin = 5;

  void add(CLI::App* cmd) {
    cmd->add_option("--chains", chains, "Number of chains")->capture_default_str();
    cmd->add_option("--iterations", iterations, "Iterations per chain, warmup included")->capture_default_str();
    cmd->add_option("--warmup", warmup, "Warmup iterations per chain")->capture_default_str();
    cmd->add_option("--thin", thin, "Keep every n-th post-warmup draw")->capture_default_str();
  }
  McmcConfig config(std::uint64_t seed) const {
    McmcConfig c;
    c.n_chains = chains;
    c.n_iterations = iterations;
    c.n_warmup = warmup;
    c.thin = thin;
    c.seed = seed;
    return c;
  }
};

class ValidationFailure : public std::runtime_error {
 public:
  ValidationFailure(std::string message, std::string payload)
      : std::runtime_error(std::move(message)), payload_(std::move(payload)) {}
  const std::string& payload() const { return payload_; }

 private:
  std::string payload_;
};

void emit(const Globals& g, const std::string& text) {
  if (g.out == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write '" + g.out + "'");
  f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::uint64_t require_seed(const Globals& g) {
  if (!g.seed) throw Error(ErrorCode::invalid_argument, "--seed is required for this command");
  return *g.seed;
}

std::string format_or(const Globals& g, const std::string& fallback) {
  const std::string f = g.format.empty() ? fallback : g.format;
  if (f != "json" && f != "csv") throw Error(ErrorCode::invalid_argument, "--format must be json or csv");
  return f;
}

void reject_csv(const Globals& g) {
  if (format_or(g, "json") != "json") throw Error(ErrorCode::invalid_argument, "this command only writes json");
}

// ---- bank ------------------------------------------------------------------

int bank_validate(const Globals& g, const std::string& path, bool lenient) {
  reject_csv(g);
  try {
    const ItemBank bank = load_bank(path, lenient);
    emit(g, dump({{"valid", true}, {"bank_id", bank.bank_id}, {"n_items", bank.items.size()},
                  {"n_scored", bank.scored_count()}}));
    return 0;
  } catch (const BankValidationError& e) {
    json v = json::array();
    for (const auto& x : e.violations()) {
      v.push_back({{"item_id", x.item_id}, {"rule", x.rule}, {"message", x.message}});
    }
    throw ValidationFailure(e.what(), dump({{"valid", false}, {"violations", v}}));
  }
}

struct SynthFlags {
  std::string family = "vlat";
  std::optional<std::size_t> n_scored, n_unscored, n_cbi_unscored, static_reference_size;
};

int bank_synth(const Globals& g, const SynthFlags& f) {
  reject_csv(g);
  const TestFamily family = test_family_from_string(f.family);
  SynthSpec spec;
  if (family == TestFamily::vlat_like) {
    spec = SynthSpec::vlat_defaults();
  } else if (family == TestFamily::calvi_like) {
    spec = SynthSpec::calvi_defaults();
  } else {
    throw Error(ErrorCode::invalid_argument, "--family must be vlat or calvi");
  }
  if (f.n_scored) spec.n_scored = *f.n_scored;
  if (f.n_unscored) spec.n_unscored = *f.n_unscored;
  if (f.n_cbi_unscored) spec.n_cbi_unscored = *f.n_cbi_unscored;
  if (f.static_reference_size) spec.static_reference_size = *f.static_reference_size;
  emit(g, dump_bank(synth_bank(require_seed(g), spec)));
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct PersonFlags {
  std::size_t persons = 500;
  std::optional<double> theta_mean;
  std::optional<double> theta_sd;

  void add(CLI::App* cmd) {
    cmd->add_option("--persons", persons, "Number of simulated persons")->capture_default_str();
    cmd->add_option("--theta-mean", theta_mean, "Mean of simulated abilities (default: bank prior mean)");
    cmd->add_option("--theta-sd", theta_sd, "SD of simulated abilities (default: bank prior sd)");
  }
  std::vector<SimulatedPerson> draw(const ItemBank& bank, std::uint64_t seed) const {
    return draw_persons(persons, theta_mean.value_or(bank.theta_prior.mean),
                        theta_sd.value_or(bank.theta_prior.sd), seed);
  }
};

int simulate_sweep(const Globals& g, const std::string& bank_path, const std::string& lengths,
                   const std::string& baseline, const PersonFlags& pf, const std::string& summary_path) {
  const std::string fmt = format_or(g, "csv");
  const std::uint64_t seed = require_seed(g);
  const ItemBank bank = load_bank(bank_path);
  const auto ls = parse_lengths(lengths);
  const auto persons = pf.draw(bank, seed);
  const SweepResult r = sweep_lengths(bank, ls, persons, baseline_from_string(baseline));
  if (!summary_path.empty()) {
    std::ofstream f(summary_path);
    if (!f) throw Error(ErrorCode::io, "cannot write '" + summary_path + "'");
    f << dump(sweep_summary_json(r));
  }
  if (fmt == "csv") {
    std::ostringstream s;
    write_sweep_csv(r, s);
    emit(g, s.str());
  } else {
    emit(g, dump(sweep_summary_json(r)));
  }
  return 0;
}

int simulate_recovery(const Globals& g, const std::string& bank_path, const std::string& rule,
                      const PersonFlags& pf, const std::string& summary_path) {
  const std::string fmt = format_or(g, "csv");
  const std::uint64_t seed = require_seed(g);
  const ItemBank bank = load_bank(bank_path);
  RecoveryRule r;
  if (rule == "printed") {
    r = RecoveryRule::printed;
  } else if (rule == "previous") {
    r = RecoveryRule::previous;
  } else {
    throw Error(ErrorCode::invalid_argument, "--rule must be printed or previous");
  }
  SessionConfig config = default_session_config(bank);
  config.rng_seed = seed;
  const auto result = recovery_analysis(bank, config, pf.draw(bank, seed), r);
  if (!summary_path.empty()) {
    std::ofstream f(summary_path);
    if (!f) throw Error(ErrorCode::io, "cannot write '" + summary_path + "'");
    f << dump(recovery_summary_json(result));
  }
  if (fmt == "csv") {
    std::ostringstream s;
    write_recovery_csv(result, s);
    emit(g, s.str());
  } else {
    emit(g, dump(recovery_summary_json(result)));
  }
  return 0;
}

// ---- calibration and evaluation --------------------------------------------

int calibrate(const Globals& g, const std::string& responses, const std::string& bank_path,
              const McmcFlags& mf, bool fragment_only) {
  reject_csv(g);
  ResponseMatrix m = read_response_matrix(responses);
  if (!bank_path.empty()) apply_item_kinds(m, load_bank(bank_path));
  const auto result = fit_2pl(m, CalibrationPriors{}, mf.config(require_seed(g)));
  emit(g, dump(fragment_only ? calibration_to_bank_fragment(result) : calibration_to_json(result)));
  return 0;
}

int eval_icc(const Globals& g, const std::string& data, const std::string& family, bool ignore_se,
             const McmcFlags& mf) {
  reject_csv(g);
  IccPriors priors = IccPriors::for_family(test_family_from_string(family));
  priors.ignore_measurement_error = ignore_se;
  const auto fit = fit_icc_model(read_paired_scores(data), priors, mf.config(require_seed(g)));
  emit(g, dump(to_json(fit)));
  return 0;
}

int eval_validity(const Globals& g, const std::string& data, const McmcFlags& mf) {
  reject_csv(g);
  const auto fit = fit_validity_model(read_paired_scores(data), ValidityPriors{}, mf.config(require_seed(g)));
  emit(g, dump(to_json(fit)));
  return 0;
}

int eval_samplesize(const Globals& g, SampleSizeRequest req, const std::string& target, const std::string& ns,
                    const McmcFlags& mf) {
  reject_csv(g);
  if (target == "icc") {
    req.target = SampleSizeTarget::icc;
  } else if (target == "rho") {
    req.target = SampleSizeTarget::validity;
  } else {
    throw Error(ErrorCode::invalid_argument, "--target must be icc or rho");
  }
  req.candidate_ns = parse_lengths(ns);
  req.mcmc = mf.config(0);
  const auto result = sample_size_simulation(req, require_seed(g));
  emit(g, dump(to_json(result, req)));
  return 0;
}

int correlations(const Globals& g, const std::string& responses, const std::string& bank_path,
                 const std::string& dimension, const McmcFlags& mf) {
  reject_csv(g);
  const ItemBank bank = load_bank(bank_path);
  const auto fc = feature_correlations(read_response_matrix(responses), bank, dimension, mf.config(require_seed(g)));
  emit(g, dump(feature_correlation_to_json(fc)));
  return 0;
}

// ---- service and replay ----------------------------------------------------

int serve(const std::string& config_path, std::optional<int> port, const std::string& data_dir,
          const std::vector<std::string>& banks, const std::string& host) {
  ServiceConfig config;
  if (!config_path.empty()) {
    config = load_service_config(config_path);
  } else if (const char* token = std::getenv(kAdminTokenEnv)) {
    config.admin_token = token;
  }
  if (port) config.port = *port;
  if (!data_dir.empty()) config.data_dir = data_dir;
  if (!host.empty()) config.host = host;
  for (const auto& b : banks) config.banks.emplace_back(b);
  if (config.banks.empty()) throw Error(ErrorCode::invalid_argument, "no banks configured");

  std::vector<ItemBank> loaded;
  for (const auto& b : config.banks) loaded.push_back(load_bank(b));

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionService service(std::move(loaded), config.data_dir, config.hidden_result_banks, config.admin_token,
                         config.layout_seed);
  for (const auto& w : service.restore_warnings()) std::cerr << "warning: " << w << '\n';
  HttpServer server(service);
  const int bound = server.bind(config.host, config.port);
  std::cout << "listening on http://" << config.host << ':' << bound << " (" << service.session_count()
            << " sessions restored)" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  waiter.detach();
  server.listen();
  return 0;
}

int replay(const Globals& g, const std::string& transcript, const std::string& bank_path) {
  reject_csv(g);
  const ItemBank bank = load_bank(bank_path);
  const auto events = read_jsonl(transcript);
  const SessionState state = replay_transcript(bank, events);
  json out = {{"session_id", state.session_id},
              {"status", to_string(state.status)},
              {"answered", state.administered.size()},
              {"consistent", true}};
  if (state.status == SessionStatus::completed) out["score"] = score_to_json(final_score(state));
  emit(g, dump(out));
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::validation:
    case ErrorCode::invalid_argument:
    case ErrorCode::infeasible:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive testing toolkit: item banks, simulation, calibration, evaluation and serving"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for stochastic commands (required by them)");
  app.add_option("--out", g.out, "Output file, '-' for stdout")->capture_default_str();
  app.add_option("--format", g.format, "Output format: json or csv (default depends on the command)")
      ->check(CLI::IsMember({"json", "csv"}));

  std::function<int()> action;

  auto* bank = app.add_subcommand("bank", "Item bank tooling");
  bank->require_subcommand(1);
  std::string bank_path;
  bool lenient = false;
  auto* validate = bank->add_subcommand("validate", "Validate an item bank file");
  validate->add_option("bank", bank_path, "Bank JSON file")->required();
  validate->add_flag("--lenient", lenient, "Ignore unknown keys");
  validate->callback([&] { action = [&] { return bank_validate(g, bank_path, lenient); }; });

  SynthFlags synth_flags;
  auto* synth = bank->add_subcommand("synth", "Generate a synthetic bank (needs --seed)");
  synth->add_option("--family", synth_flags.family, "vlat or calvi")->capture_default_str();
  synth->add_option("--n-scored", synth_flags.n_scored, "Number of scored items");
  synth->add_option("--n-unscored", synth_flags.n_unscored, "Number of unscored items");
  synth->add_option("--n-cbi-unscored", synth_flags.n_cbi_unscored, "Unscored items with a cannot-infer option");
  synth->add_option("--static-reference-size", synth_flags.static_reference_size, "Static reference subset size");
  synth->callback([&] { action = [&] { return bank_synth(g, synth_flags); }; });

  auto* simulate = app.add_subcommand("simulate", "Simulation studies");
  simulate->require_subcommand(1);
  std::string lengths = "19:53";
  std::string baseline = "full_bank";
  std::string summary_path;
  std::string rule = "printed";
  PersonFlags person_flags;
  auto* sweep = simulate->add_subcommand("sweep", "Relative SE difference by test length (needs --seed)");
  sweep->add_option("--bank", bank_path, "Bank JSON file")->required();
  sweep->add_option("--lengths", lengths, "Range lo:hi or list a,b,c")->capture_default_str();
  sweep->add_option("--baseline", baseline, "full_bank or static_reference")
      ->check(CLI::IsMember({"full_bank", "static_reference"}))
      ->capture_default_str();
  sweep->add_option("--summary", summary_path, "Also write the JSON summary here");
  person_flags.add(sweep);
  sweep->callback([&] {
    action = [&] { return simulate_sweep(g, bank_path, lengths, baseline, person_flags, summary_path); };
  });

  auto* recovery = simulate->add_subcommand("recovery", "Mistake recovery lengths (needs --seed)");
  recovery->add_option("--bank", bank_path, "Bank JSON file")->required();
  recovery->add_option("--rule", rule, "printed or previous")
      ->check(CLI::IsMember({"printed", "previous"}))
      ->capture_default_str();
  recovery->add_option("--summary", summary_path, "Also write the JSON summary here");
  person_flags.add(recovery);
  recovery->callback([&] {
    action = [&] { return simulate_recovery(g, bank_path, rule, person_flags, summary_path); };
  });

  std::string responses;
  bool fragment_only = false;
  McmcFlags mcmc_flags;
  auto* cal = app.add_subcommand("calibrate", "Bayesian 2PL calibration of a response matrix (needs --seed)");
  cal->add_option("--responses", responses, "Response matrix CSV")->required();
  cal->add_option("--bank", bank_path, "Bank whose item kinds apply (unscored columns are ignored)");
  cal->add_flag("--fragment", fragment_only, "Write only the bank fragment");
  mcmc_flags.add(cal);
  cal->callback([&] { action = [&] { return calibrate(g, responses, bank_path, mcmc_flags, fragment_only); }; });

  auto* eval = app.add_subcommand("eval", "Reliability and validity models");
  eval->require_subcommand(1);
  std::string data;
  std::string family = "custom";
  bool ignore_se = false;
  auto* icc = eval->add_subcommand("icc", "Test-retest ICC (needs --seed)");
  icc->add_option("--data", data, "CSV person_id,theta_1,se_1,theta_2,se_2")->required();
  icc->add_option("--family", family, "vlat, calvi or custom (sets the prior on the mean)")->capture_default_str();
  icc->add_flag("--ignore-se", ignore_se, "Drop the standard errors from the likelihood");
  mcmc_flags.add(icc);
  icc->callback([&] { action = [&] { return eval_icc(g, data, family, ignore_se, mcmc_flags); }; });

  auto* validity = eval->add_subcommand("validity", "Convergent validity; column 1 original, 2 adaptive (needs --seed)");
  validity->add_option("--data", data, "CSV person_id,theta_1,se_1,theta_2,se_2")->required();
  mcmc_flags.add(validity);
  validity->callback([&] { action = [&] { return eval_validity(g, data, mcmc_flags); }; });

  SampleSizeRequest ss;
  std::string target = "icc";
  std::string ns = "30,60,100,200";
  auto* samplesize = eval->add_subcommand("samplesize", "Credible-interval width by sample size (needs --seed)");
  samplesize->add_option("--target", target, "icc or rho")->check(CLI::IsMember({"icc", "rho"}))->capture_default_str();
  samplesize->add_option("--ns", ns, "Candidate sample sizes, list or lo:hi")->capture_default_str();
  samplesize->add_option("--replicates", ss.replicates, "Datasets per sample size")->capture_default_str();
  samplesize->add_option("--half-width", ss.target_half_width, "Target 95% half-width")->capture_default_str();
  samplesize->add_option("--mu", ss.retest.mu, "Retest generator mean")->capture_default_str();
  samplesize->add_option("--sigma-alpha", ss.retest.sigma_alpha, "Retest between-person sd")->capture_default_str();
  samplesize->add_option("--sigma-epsilon", ss.retest.sigma_epsilon, "Retest within-person sd")->capture_default_str();
  samplesize->add_option("--se", ss.retest.se, "Retest measurement se")->capture_default_str();
  samplesize->add_option("--rho", ss.validity.rho, "Validity generator correlation")->capture_default_str();
  samplesize->add_option("--diff", ss.validity.diff, "Validity mean difference")->capture_default_str();
  samplesize->add_option("--sigma-1", ss.validity.sigma_1, "Validity sd, original test")->capture_default_str();
  samplesize->add_option("--sigma-2", ss.validity.sigma_2, "Validity sd, adaptive test")->capture_default_str();
  samplesize->add_option("--se-1", ss.validity.se_1, "Validity se, original test")->capture_default_str();
  samplesize->add_option("--se-2", ss.validity.se_2, "Validity se, adaptive test")->capture_default_str();
  mcmc_flags.add(samplesize);
  samplesize->callback([&] { action = [&] { return eval_samplesize(g, ss, target, ns, mcmc_flags); }; });

  std::string dimension;
  auto* corr = app.add_subcommand("correlations", "Pairwise ability correlations across feature values (needs --seed)");
  corr->add_option("--responses", responses, "Response matrix CSV")->required();
  corr->add_option("--bank", bank_path, "Bank JSON file")->required();
  corr->add_option("--dimension", dimension, "Feature dimension, e.g. misleader")->required();
  mcmc_flags.add(corr);
  corr->callback([&] { action = [&] { return correlations(g, responses, bank_path, dimension, mcmc_flags); }; });

  std::string config_path, data_dir, host;
  std::optional<int> port;
  std::vector<std::string> serve_banks;
  auto* srv = app.add_subcommand("serve", "Run the HTTP session service");
  srv->add_option("--config", config_path, "Service config JSON");
  srv->add_option("--port", port, "Port (0 picks a free one)");
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--data-dir", data_dir, "Session log directory");
  srv->add_option("--bank", serve_banks, "Bank file to load (repeatable)");
  srv->callback([&] { action = [&] { return serve(config_path, port, data_dir, serve_banks, host); }; });

  std::string transcript;
  auto* rep = app.add_subcommand("replay", "Re-run a session transcript and check it");
  rep->add_option("--transcript", transcript, "JSON-lines transcript")->required();
  rep->add_option("--bank", bank_path, "Bank JSON file")->required();
  rep->callback([&] { action = [&] { return replay(g, transcript, bank_path); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action();
  } catch (const ValidationFailure& e) {
    try {
      emit(g, e.payload());
    } catch (const std::exception&) {
    }
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
