#pragma once

// Random-walk Metropolis over user-supplied log densities: multi-chain runs,
// warmup step-size adaptation, thinning and per-parameter diagnostics.
//
// Constrained parameters are sampled on an unconstrained scale (log for
// positive, atanh for correlations) with the Jacobian added automatically.
// Parameters are grouped into blocks; each iteration proposes one joint move
// per block, so a block per parameter gives component-wise Metropolis and
// model-specific blocks give Metropolis-within-Gibbs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adaptest/diagnostics.hpp"

namespace adaptest {

enum class Support { real, positive, correlation };

struct ParameterSpec {
  std::string name;
  Support support = Support::real;
  double initial = 0.0;     // constrained scale
  double step_scale = 1.0;  // proposal sd on the unconstrained scale
};

struct McmcConfig {
  std::size_t n_chains = 4;
  std::size_t n_iterations = 20000;
  std::size_t n_warmup = 10000;
  std::size_t thin = 5;
  std::uint64_t seed = 0;
  /// Optional per-parameter override of ParameterSpec::step_scale.
  std::vector<double> initial_step_scales;
  /// Sd of the per-chain jitter applied to initial values (unconstrained).
  double init_jitter = 0.5;
  bool parallel_chains = true;

  std::size_t kept_per_chain() const { return (n_iterations - n_warmup) / thin; }
  void validate() const;
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;
  double ess_bulk = 0.0;
  double ess_tail = 0.0;
};

struct McmcRun {
  McmcConfig config;
  std::vector<std::string> names;
  std::vector<ChainDraws> draws;  // [parameter][chain][kept draw], constrained scale
  std::vector<double> acceptance_rates;  // per chain, post-warmup
  std::vector<double> rhat;
  std::vector<double> ess_bulk;
  std::vector<double> ess_tail;
  std::vector<std::string> warnings;

  std::size_t index_of(const std::string& name) const;
  std::vector<double> pooled(std::size_t parameter) const;
  ParameterSummary summary(std::size_t parameter) const;
  std::size_t total_kept() const;
  /// Diagnostics are skipped (NaN) when fewer than 4 draws per chain are kept.
  void compute_diagnostics();
  /// CSV with `chain`, `iter` and one column per parameter.
  void write_csv(std::ostream& out) const;
};

class BlockedTarget {
 public:
  virtual ~BlockedTarget() = default;
  virtual const std::vector<ParameterSpec>& parameters() const = 0;
  virtual std::size_t block_count() const = 0;
  virtual std::span<const std::size_t> block(std::size_t b) const = 0;
  /// Log density of block b's parameters given all others, up to a constant,
  /// on the constrained scale. Called concurrently from several chains.
  virtual double block_log_density(std::size_t b, std::span<const double> values) const = 0;
  /// True when block_log_density is the joint density for every block, which
  /// lets the sampler cache the current value between blocks.
  virtual bool joint_density() const { return false; }
};

using LogDensity = std::function<double(std::span<const double>)>;

/// Component-wise random-walk Metropolis on a joint log density.
McmcRun run_chains(const LogDensity& log_density, const std::vector<ParameterSpec>& parameters,
                   const McmcConfig& config);

McmcRun run_blocked(const BlockedTarget& target, const McmcConfig& config);

/// Acceptance rate the warmup steers a block of `dim` parameters toward.
double target_acceptance(std::size_t dim);

}  // namespace adaptest
