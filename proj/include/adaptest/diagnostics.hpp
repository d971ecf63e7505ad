#pragma once

// Convergence diagnostics over multi-chain draws: split-chain potential scale
// reduction and autocorrelation-based effective sample size (bulk on
// rank-normalized draws, tail on 5%/95% quantile indicators).

#include <span>
#include <vector>

namespace adaptest {

/// Draws of one parameter, chain-major: chains[c][t].
using ChainDraws = std::vector<std::vector<double>>;

/// Split-chain R-hat: sqrt(((n-1)/n * W + B/n) / W) over the 2m half-chains.
/// Requires >= 2 chains of equal length >= 4. Throws "degenerate chains"
/// when the within-chain variance is zero.
double rhat(const ChainDraws& chains);

enum class EssMode { bulk, tail };

/// Effective sample size (Geyer initial monotone positive sequence on split
/// chains).
double ess(const ChainDraws& chains, EssMode mode);

/// ESS of the draws as given (no rank normalization); the building block of
/// both modes.
double ess_raw(const ChainDraws& chains);

/// Normal scores of the pooled fractional ranks, (r - 3/8) / (S + 1/4).
ChainDraws rank_normalize(const ChainDraws& chains);

}  // namespace adaptest
