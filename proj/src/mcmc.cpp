#include "adaptest/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "adaptest/error.hpp"
#include "adaptest/random.hpp"
#include "adaptest/stats.hpp"

namespace adaptest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLowAcceptance = 0.01;
constexpr int kInitAttempts = 100;

double to_constrained(Support s, double x) {
  switch (s) {
    case Support::positive: return std::exp(x);
    case Support::correlation: return std::tanh(x);
    case Support::real: break;
  }
  return x;
}

double to_unconstrained(Support s, double c) {
  switch (s) {
    case Support::positive:
      if (!(c > 0.0)) throw Error(ErrorCode::invalid_argument, "initial value must be positive");
      return std::log(c);
    case Support::correlation:
      if (!(std::abs(c) < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "initial correlation must lie in (-1, 1)");
      }
      return std::atanh(c);
    case Support::real: break;
  }
  return c;
}

// log |d constrained / d unconstrained|
double log_jacobian(Support s, double x) {
  switch (s) {
    case Support::positive: return x;
    case Support::correlation: {
      const double ax = std::abs(x);
      return std::log(4.0) - 2.0 * (ax + std::log1p(std::exp(-2.0 * ax)));
    }
    case Support::real: break;
  }
  return 0.0;
}

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

struct ChainResult {
  std::vector<std::vector<double>> kept;  // [parameter][draw]
  std::size_t accepted = 0;
  std::size_t proposed = 0;
};

class ChainRunner {
 public:
  ChainRunner(const BlockedTarget& target, const McmcConfig& config, std::size_t chain)
      : target_(target),
        specs_(target.parameters()),
        config_(config),
        rng_(derive_seed(config.seed, chain + 1)) {}

  ChainResult run() {
    initialize();
    const std::size_t n_blocks = target_.block_count();
    log_scale_.assign(n_blocks, 0.0);
    std::vector<std::size_t> adapt_steps(n_blocks, 0);
    std::vector<Welford> window(specs_.size());
    const std::size_t window_lo = config_.n_warmup / 4;
    const std::size_t window_hi = config_.n_warmup / 2;
    const bool rescale = config_.n_warmup >= 40;

    ChainResult out;
    out.kept.assign(specs_.size(), {});
    for (auto& k : out.kept) k.reserve(config_.kept_per_chain());

    for (std::size_t t = 0; t < config_.n_iterations; ++t) {
      const bool warmup = t < config_.n_warmup;
      if (warmup && rescale && t == window_hi) {
        for (std::size_t p = 0; p < specs_.size(); ++p) {
          const double s = window[p].sd();
          if (s > 0.0 && std::isfinite(s)) scale_[p] = s;
        }
        for (std::size_t b = 0; b < n_blocks; ++b) {
          log_scale_[b] = std::log(2.38 / std::sqrt(static_cast<double>(target_.block(b).size())));
          adapt_steps[b] = 0;
        }
      }
      for (std::size_t b = 0; b < n_blocks; ++b) {
        const auto [accepted, alpha] = step(b);
        if (warmup) {
          const double gain = std::pow(static_cast<double>(++adapt_steps[b]), -0.6);
          log_scale_[b] += gain * (alpha - target_acceptance(target_.block(b).size()));
          log_scale_[b] = std::clamp(log_scale_[b], -20.0, 10.0);
        } else {
          ++out.proposed;
          if (accepted) ++out.accepted;
        }
      }
      if (warmup && rescale && t >= window_lo && t < window_hi) {
        for (std::size_t p = 0; p < specs_.size(); ++p) window[p].add(x_[p]);
      }
      if (!warmup && (t - config_.n_warmup) % config_.thin == config_.thin - 1) {
        for (std::size_t p = 0; p < specs_.size(); ++p) out.kept[p].push_back(c_[p]);
      }
    }
    return out;
  }

 private:
  double block_jacobian(std::span<const std::size_t> idx) const {
    double j = 0.0;
    for (std::size_t k : idx) j += log_jacobian(specs_[k].support, x_[k]);
    return j;
  }

  void set(std::size_t k, double x) {
    x_[k] = x;
    c_[k] = to_constrained(specs_[k].support, x);
  }

  bool all_blocks_finite() {
    for (std::size_t b = 0; b < target_.block_count(); ++b) {
      if (!std::isfinite(target_.block_log_density(b, c_))) return false;
    }
    return true;
  }

  void initialize() {
    const std::size_t n = specs_.size();
    x_.assign(n, 0.0);
    c_.assign(n, 0.0);
    scale_.assign(n, 1.0);
    std::vector<double> base(n);
    for (std::size_t k = 0; k < n; ++k) {
      base[k] = to_unconstrained(specs_[k].support, specs_[k].initial);
      scale_[k] = config_.initial_step_scales.empty() ? specs_[k].step_scale
                                                      : config_.initial_step_scales[k];
    }
    std::normal_distribution<double> z;
    for (int attempt = 0; attempt <= kInitAttempts; ++attempt) {
      const double jitter = attempt == kInitAttempts ? 0.0 : config_.init_jitter;
      for (std::size_t k = 0; k < n; ++k) set(k, base[k] + jitter * z(rng_));
      if (all_blocks_finite()) {
        if (target_.joint_density()) current_ = target_.block_log_density(0, c_);
        return;
      }
    }
    throw Error(ErrorCode::numerical, "non-finite log posterior at initial values");
  }

  // One block proposal. Returns (accepted, acceptance probability).
  std::pair<bool, double> step(std::size_t b) {
    const auto idx = target_.block(b);
    const bool joint = target_.joint_density();
    const double cur = (joint ? current_ : target_.block_log_density(b, c_)) + block_jacobian(idx);

    saved_.resize(idx.size());
    const double mult = std::exp(log_scale_[b]);
    std::normal_distribution<double> z;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t k = idx[i];
      saved_[i] = x_[k];
      set(k, x_[k] + mult * scale_[k] * z(rng_));
    }
    const double dens = target_.block_log_density(b, c_);
    const double prop = dens + block_jacobian(idx);
    double alpha = 0.0;
    if (std::isfinite(prop)) {
      const double diff = prop - cur;
      alpha = std::isfinite(diff) ? (diff >= 0.0 ? 1.0 : std::exp(diff)) : 1.0;
    }
    if (alpha > 0.0 && uniform01(rng_) < alpha) {
      if (joint) current_ = dens;
      return {true, alpha};
    }
    for (std::size_t i = 0; i < idx.size(); ++i) set(idx[i], saved_[i]);
    return {false, alpha};
  }

  const BlockedTarget& target_;
  const std::vector<ParameterSpec>& specs_;
  const McmcConfig& config_;
  Rng rng_;
  std::vector<double> x_;
  std::vector<double> c_;
  std::vector<double> scale_;
  std::vector<double> log_scale_;
  std::vector<double> saved_;
  double current_ = 0.0;
};

class JointTarget final : public BlockedTarget {
 public:
  JointTarget(const LogDensity& f, std::vector<ParameterSpec> specs)
      : f_(f), specs_(std::move(specs)), index_(specs_.size()) {
    std::iota(index_.begin(), index_.end(), std::size_t{0});
  }
  const std::vector<ParameterSpec>& parameters() const override { return specs_; }
  std::size_t block_count() const override { return specs_.size(); }
  std::span<const std::size_t> block(std::size_t b) const override {
    return std::span<const std::size_t>(index_).subspan(b, 1);
  }
  double block_log_density(std::size_t, std::span<const double> values) const override {
    return f_(values);
  }
  bool joint_density() const override { return true; }

 private:
  const LogDensity& f_;
  std::vector<ParameterSpec> specs_;
  std::vector<std::size_t> index_;
};

void validate_target(const BlockedTarget& target, const McmcConfig& config) {
  const auto& specs = target.parameters();
  if (specs.empty()) throw Error(ErrorCode::invalid_argument, "no parameters to sample");
  if (!config.initial_step_scales.empty() && config.initial_step_scales.size() != specs.size()) {
    throw Error(ErrorCode::invalid_argument, "initial_step_scales must match the parameter count");
  }
  std::vector<int> seen(specs.size(), 0);
  for (std::size_t b = 0; b < target.block_count(); ++b) {
    const auto idx = target.block(b);
    if (idx.empty()) throw Error(ErrorCode::invalid_argument, "empty parameter block");
    for (std::size_t k : idx) {
      if (k >= specs.size()) throw Error(ErrorCode::invalid_argument, "block index out of range");
      ++seen[k];
    }
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (seen[k] != 1) {
      throw Error(ErrorCode::invalid_argument,
                  "parameter '" + specs[k].name + "' must belong to exactly one block");
    }
    const double s = config.initial_step_scales.empty() ? specs[k].step_scale
                                                        : config.initial_step_scales[k];
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::invalid_argument, "step scales must be positive");
    }
  }
}

}  // namespace

double target_acceptance(std::size_t dim) { return dim <= 1 ? 0.44 : 0.35; }

void McmcConfig::validate() const {
  if (n_chains < 2) throw Error(ErrorCode::invalid_argument, "n_chains must be at least 2");
  if (thin < 1) throw Error(ErrorCode::invalid_argument, "thin must be at least 1");
  if (n_warmup >= n_iterations) {
    throw Error(ErrorCode::invalid_argument, "n_warmup must be smaller than n_iterations");
  }
  if (kept_per_chain() < 1) throw Error(ErrorCode::invalid_argument, "no draws kept after thinning");
  if (!(init_jitter >= 0.0)) throw Error(ErrorCode::invalid_argument, "init_jitter must be >= 0");
}

std::size_t McmcRun::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::not_found, "unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> McmcRun::pooled(std::size_t parameter) const {
  std::vector<double> out;
  out.reserve(total_kept());
  for (const auto& chain : draws.at(parameter)) out.insert(out.end(), chain.begin(), chain.end());
  return out;
}

std::size_t McmcRun::total_kept() const {
  if (draws.empty()) return 0;
  std::size_t n = 0;
  for (const auto& chain : draws.front()) n += chain.size();
  return n;
}

ParameterSummary McmcRun::summary(std::size_t parameter) const {
  const auto xs = pooled(parameter);
  ParameterSummary s;
  s.name = names.at(parameter);
  s.mean = mean_of(xs);
  s.sd = sd_of(xs);
  s.median = median_of(xs);
  s.q025 = quantile(xs, 0.025);
  s.q975 = quantile(xs, 0.975);
  s.rhat = parameter < rhat.size() ? rhat[parameter] : kNaN;
  s.ess_bulk = parameter < ess_bulk.size() ? ess_bulk[parameter] : kNaN;
  s.ess_tail = parameter < ess_tail.size() ? ess_tail[parameter] : kNaN;
  return s;
}

void McmcRun::compute_diagnostics() {
  const std::size_t p = draws.size();
  rhat.assign(p, kNaN);
  ess_bulk.assign(p, kNaN);
  ess_tail.assign(p, kNaN);
  if (p == 0 || draws.front().empty() || draws.front().front().size() < 4) return;
  for (std::size_t k = 0; k < p; ++k) {
    try {
      rhat[k] = adaptest::rhat(draws[k]);
      ess_bulk[k] = ess(draws[k], EssMode::bulk);
      ess_tail[k] = ess(draws[k], EssMode::tail);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical) throw;
      warnings.push_back(names[k] + ": " + e.what());
    }
  }
}

void McmcRun::write_csv(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  out << "chain,iter";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  if (!draws.empty()) {
    for (std::size_t c = 0; c < draws.front().size(); ++c) {
      for (std::size_t t = 0; t < draws.front()[c].size(); ++t) {
        out << c + 1 << ',' << config.n_warmup + (t + 1) * config.thin;
        for (const auto& param : draws) out << ',' << param[c][t];
        out << '\n';
      }
    }
  }
  out.precision(old_precision);
}

McmcRun run_blocked(const BlockedTarget& target, const McmcConfig& config) {
  config.validate();
  validate_target(target, config);

  std::vector<ChainResult> results(config.n_chains);
  std::vector<std::exception_ptr> errors(config.n_chains);
  auto work = [&](std::size_t c) {
    try {
      results[c] = ChainRunner(target, config, c).run();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel_chains && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < config.n_chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < config.n_chains; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto& specs = target.parameters();
  McmcRun run;
  run.config = config;
  for (const auto& s : specs) run.names.push_back(s.name);
  run.draws.assign(specs.size(), ChainDraws(config.n_chains));
  for (std::size_t c = 0; c < config.n_chains; ++c) {
    for (std::size_t k = 0; k < specs.size(); ++k) run.draws[k][c] = std::move(results[c].kept[k]);
    const double rate = results[c].proposed == 0
                            ? 0.0
                            : static_cast<double>(results[c].accepted) /
                                  static_cast<double>(results[c].proposed);
    run.acceptance_rates.push_back(rate);
    if (rate < kLowAcceptance) {
      run.warnings.push_back("chain " + std::to_string(c + 1) + " acceptance rate below 0.01");
    }
  }
  run.compute_diagnostics();
  return run;
}

McmcRun run_chains(const LogDensity& log_density, const std::vector<ParameterSpec>& parameters,
                   const McmcConfig& config) {
  const JointTarget target(log_density, parameters);
  return run_blocked(target, config);
}

}  // namespace adaptest
