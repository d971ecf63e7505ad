#include "adaptest/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adaptest/error.hpp"
#include "adaptest/stats.hpp"

namespace adaptest {

namespace {

void check_shape(const ChainDraws& chains) {
  if (chains.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "diagnostics need at least 2 chains");
  }
  const std::size_t n = chains.front().size();
  if (n < 4) throw Error(ErrorCode::invalid_argument, "diagnostics need at least 4 draws per chain");
  for (const auto& c : chains) {
    if (c.size() != n) throw Error(ErrorCode::invalid_argument, "chains must have equal length");
  }
}

ChainDraws split_chains(const ChainDraws& chains) {
  ChainDraws out;
  out.reserve(chains.size() * 2);
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Biased autocovariance at `lag` of one chain around its own mean.
double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(n);
}

// Geyer initial monotone positive sequence estimator across chains (no
// splitting here; callers split first).
double ess_of_chains(const ChainDraws& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m);
  std::vector<double> acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    acov0[c] = autocovariance(chains[c], means[c], 0);
  }
  const double nd = static_cast<double>(n);
  double mean_var = 0.0;
  for (double a : acov0) mean_var += a * nd / (nd - 1.0);
  mean_var /= static_cast<double>(m);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    const double sdm = sd_of(means);
    var_plus += sdm * sdm;
  }
  if (!(mean_var > 0.0) || !(var_plus > 0.0)) {
    throw Error(ErrorCode::numerical, "degenerate chains");
  }

  auto rho_at = [&](std::size_t lag) {
    double mean_acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean_acov += autocovariance(chains[c], means[c], lag);
    mean_acov /= static_cast<double>(m);
    return 1.0 - (mean_var - mean_acov) / var_plus;
  };

  std::vector<double> rho(n, 0.0);
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[0] = rho_even;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && (rho_even + rho_odd) > 0.0) {
    rho_even = rho_at(t + 1);
    rho_odd = rho_at(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0 && max_t + 1 < n) rho[max_t + 1] = rho_even;

  // Enforce monotonically decreasing pair sums.
  for (std::size_t s = 1; s + 3 <= max_t; s += 2) {
    if (rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]) {
      rho[s + 1] = 0.5 * (rho[s - 1] + rho[s]);
      rho[s + 2] = rho[s + 1];
    }
  }

  const double total = static_cast<double>(m) * nd;
  double sum = 0.0;
  for (std::size_t s = 0; s <= max_t && s < n; ++s) sum += rho[s];
  double tau = -1.0 + 2.0 * sum + (max_t + 1 < n ? rho[max_t + 1] : 0.0);
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

double rhat(const ChainDraws& chains) {
  check_shape(chains);
  const ChainDraws halves = split_chains(chains);
  const std::size_t m = halves.size();
  const double n = static_cast<double>(halves.front().size());
  std::vector<double> means(m);
  double within = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(halves[c]);
    const double s = sd_of(halves[c]);
    within += s * s;
  }
  within /= static_cast<double>(m);
  if (!(within > 0.0)) throw Error(ErrorCode::numerical, "degenerate chains");
  const double sdm = sd_of(means);
  const double between = n * sdm * sdm;
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::sqrt(var_plus / within);
}

ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  pooled.reserve(total);
  std::size_t flat = 0;
  for (const auto& c : chains) {
    for (double x : c) pooled.emplace_back(x, flat++);
  }
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> ranks(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && pooled[j + 1].first == pooled[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[pooled[k].second] = avg;
    i = j + 1;
  }
  ChainDraws out;
  flat = 0;
  const double denom = static_cast<double>(total) + 0.25;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (double& v : z) v = normal_quantile((ranks[flat++] - 0.375) / denom);
    out.push_back(std::move(z));
  }
  return out;
}

double ess_raw(const ChainDraws& chains) {
  check_shape(chains);
  return ess_of_chains(split_chains(chains));
}

double ess(const ChainDraws& chains, EssMode mode) {
  check_shape(chains);
  if (mode == EssMode::bulk) {
    // Constant input would rank-normalize to a constant; catch it up front.
    double lo = chains[0][0], hi = chains[0][0];
    for (const auto& c : chains) {
      for (double x : c) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (lo == hi) throw Error(ErrorCode::numerical, "degenerate chains");
    return ess_of_chains(split_chains(rank_normalize(chains)));
  }
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (*std::min_element(pooled.begin(), pooled.end()) == *std::max_element(pooled.begin(), pooled.end())) {
    throw Error(ErrorCode::numerical, "degenerate chains");
  }
  const double q05 = quantile(pooled, 0.05);
  const double q95 = quantile(pooled, 0.95);
  auto indicator = [&](double cut) {
    ChainDraws out;
    for (const auto& c : chains) {
      std::vector<double> v(c.size());
      for (std::size_t i = 0; i < c.size(); ++i) v[i] = c[i] <= cut ? 1.0 : 0.0;
      out.push_back(std::move(v));
    }
    return out;
  };
  return std::min(ess_of_chains(split_chains(indicator(q05))),
                  ess_of_chains(split_chains(indicator(q95))));
}

}  // namespace adaptest
