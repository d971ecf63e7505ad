#include <doctest.h>

#include <cmath>
#include <fstream>

#include "adaptest/eval_models.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace adaptest;

namespace {

McmcConfig reduced(std::uint64_t seed) {
  McmcConfig c;
  c.n_iterations = 6000;
  c.n_warmup = 3000;
  c.thin = 1;
  c.seed = seed;
  return c;
}

constexpr std::size_t kInner = 801;

// Per-person retest likelihood by brute-force integration over the person
// effect and both attempt-level true scores.
long double retest_marginal(const PairedScores& d, double mu, double sa, double se) {
  auto attempt = [&](long double alpha, double y, double s) {
    const long double c = mu + alpha;
    return oracle::simpson(
        [&](long double t) { return oracle::normal_pdf(t, c, se) * oracle::normal_pdf(y, t, s); },
        c - 12.0L * se, c + 12.0L * se, kInner);
  };
  return oracle::simpson(
      [&](long double alpha) {
        return oracle::normal_pdf(alpha, 0.0L, sa) * attempt(alpha, d.theta_1, d.se_1) * attempt(alpha, d.theta_2, d.se_2);
      },
      -12.0L * sa, 12.0L * sa, kInner);
}

// Per-person validity likelihood integrating over the latent pair.
long double validity_marginal(const PairedScores& d, double diff, double s1, double s2, double rho) {
  const long double cond_sd = s2 * std::sqrt(1.0L - static_cast<long double>(rho) * rho);
  return oracle::simpson(
      [&](long double e1) {
        const long double cond_mean = diff + rho * s2 / s1 * e1;
        const long double inner = oracle::simpson(
            [&](long double e2) { return oracle::normal_pdf(e2, cond_mean, cond_sd) * oracle::normal_pdf(d.theta_2, e2, d.se_2); },
            cond_mean - 12.0L * cond_sd, cond_mean + 12.0L * cond_sd, kInner);
        return oracle::normal_pdf(e1, 0.0L, s1) * oracle::normal_pdf(d.theta_1, e1, d.se_1) * inner;
      },
      -12.0L * s1, 12.0L * s1, kInner);
}

}  // namespace

TEST_SUITE("eval_models") {

TEST_CASE("icc formula") {
  CHECK(icc_from_variances(1.0, 1.0) == 0.5);
  CHECK(icc_from_variances(3.0, 1.0) == 0.9);
  CHECK(icc_from_variances(1.0, 0.33) == doctest::Approx(1.0 / 1.1089).epsilon(1e-15));
  CHECK(icc_from_variances(0.9, 0.3) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(icc_from_variances(1.0, 3.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(icc_from_variances(0.25, 0.25) == 0.5);
  CHECK_THROWS_AS(icc_from_variances(0.0, 1.0), Error);
  CHECK_THROWS_AS(icc_from_variances(1.0, -1.0), Error);
  CHECK_THROWS_AS(icc_from_variances(1.0, 0.0), Error);
}

TEST_CASE("retest likelihood equals brute-force marginalization") {
  const std::vector<PairedScores> data{{"A", 0.3, 0.2, 0.5, 0.25}, {"B", -1.1, 0.3, -0.7, 0.15}};
  for (const auto& [mu, sa, se] : std::vector<std::tuple<double, double, double>>{
           {0.0, 1.0, 0.33}, {-0.4, 0.6, 0.8}, {0.2, 1.7, 0.2}}) {
    long double ref = 0.0L;
    for (const auto& d : data) ref += std::log(retest_marginal(d, mu, sa, se));
    CHECK(std::abs(icc_log_likelihood(data, mu, sa, se) - static_cast<double>(ref)) < 1e-6);
  }
  // Without measurement error the standard errors drop out entirely.
  std::vector<PairedScores> tiny = data;
  for (auto& d : tiny) d.se_1 = d.se_2 = 1e-9;
  CHECK(icc_log_likelihood(data, 0.1, 1.0, 0.5, true) == doctest::Approx(icc_log_likelihood(tiny, 0.1, 1.0, 0.5)));
}

TEST_CASE("validity likelihood equals brute-force marginalization") {
  const std::vector<PairedScores> data{{"A", 0.4, 0.2, 0.1, 0.3}, {"B", -0.9, 0.25, -1.3, 0.2}};
  for (const auto& [diff, s1, s2, rho] : std::vector<std::tuple<double, double, double, double>>{
           {0.0, 1.0, 1.0, 0.8}, {0.3, 0.7, 1.4, -0.2}, {-0.5, 1.2, 0.9, 0.95}}) {
    long double ref = 0.0L;
    for (const auto& d : data) ref += std::log(validity_marginal(d, diff, s1, s2, rho));
    CHECK(std::abs(validity_log_likelihood(data, diff, s1, s2, rho) - static_cast<double>(ref)) < 1e-6);
  }
  CHECK(std::isinf(validity_log_likelihood(data, 0.0, 1.0, 1.0, 1.0)));
}

TEST_CASE("icc recovery and sample-size logic") {
  const RetestGenerator g{200, 0.0, 1.0, 0.33, 0.2};
  const auto big = fit_icc_model(simulate_retest(g, 1), {}, reduced(2));
  const auto& icc = big.summaries.at("icc");
  CHECK(std::abs(icc.median - 0.90) < 0.07);
  CHECK(icc.lo95 < icc.median);
  CHECK(icc.hi95 > icc.median);
  CHECK(big.summaries.at("sigma_alpha").rhat < 1.02);
  CHECK(big.icc.size() == 4);

  RetestGenerator small = g;
  small.n = 60;
  const auto sm = fit_icc_model(simulate_retest(small, 1), {}, reduced(2));
  CHECK(sm.summaries.at("icc").half_width() > icc.half_width());
}

TEST_CASE("ignoring measurement error underestimates reliability") {
  const RetestGenerator g{300, 0.0, 1.0, 0.33, 0.4};
  const auto data = simulate_retest(g, 3);
  const auto full = fit_icc_model(data, {}, reduced(4));
  IccPriors naive;
  naive.ignore_measurement_error = true;
  const auto dropped = fit_icc_model(data, naive, reduced(4));
  CHECK(dropped.summaries.at("icc").median < full.summaries.at("icc").median);
  CHECK(dropped.summaries.at("sigma_epsilon").median > full.summaries.at("sigma_epsilon").median);
}

TEST_CASE("family priors") {
  CHECK(IccPriors::for_family(TestFamily::calvi_like).mu_mean == -1.0);
  CHECK(IccPriors::for_family(TestFamily::vlat_like).mu_mean == 0.0);
  const auto fit = fit_icc_model(simulate_retest({100, -1.0, 1.0, 0.33, 0.2}, 5),
                                 IccPriors::for_family(TestFamily::calvi_like), reduced(6));
  CHECK(std::abs(fit.summaries.at("mu").median + 1.0) < 0.3);
}

TEST_CASE("validity recovery") {
  const ValidityGenerator g{200, 0.3, 1.0, 1.2, 0.8, 0.15, 0.15};
  const auto fit = fit_validity_model(simulate_validity(g, 7), {}, reduced(8));
  CHECK(std::abs(fit.summaries.at("rho").median - 0.8) < 0.07);
  CHECK(std::abs(fit.summaries.at("diff").median - (0.3 - fit.centering_offset)) < 0.2);
  CHECK(std::abs(fit.summaries.at("sigma_adaptive").median - 1.2) < 0.2);
  CHECK(fit.run.names == std::vector<std::string>{"diff", "sigma_original", "sigma_adaptive", "rho"});
}

TEST_CASE("centering") {
  const std::vector<PairedScores> data{{"a", 1.0, 0.1, 2.0, 0.1}, {"b", 3.0, 0.1, 1.0, 0.1}};
  const auto c = center_on_first(data);
  CHECK(c[0].theta_1 == -1.0);
  CHECK(c[1].theta_1 == 1.0);
  CHECK(c[0].theta_2 == 0.0);
  CHECK(c[1].theta_2 == -1.0);
}

TEST_CASE("sample size simulation") {
  SampleSizeRequest req;
  req.target = SampleSizeTarget::icc;
  req.candidate_ns = {120, 30, 120};
  req.replicates = 3;
  req.target_half_width = 0.06;
  req.mcmc = reduced(0);
  req.mcmc.n_iterations = 3000;
  req.mcmc.n_warmup = 1500;
  const auto r = sample_size_simulation(req, 9);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].n == 30);
  CHECK(r.rows[0].half_widths.size() == 3);
  CHECK(r.rows[1].median_half_width < r.rows[0].median_half_width);
  if (r.first_n_meeting_target != 0) {
    CHECK(r.rows[r.first_n_meeting_target == 30 ? 0 : 1].median_half_width <= 0.06);
  }
  const auto j = to_json(r, req);
  CHECK(j.contains("rows"));
  req.candidate_ns = {2};
  CHECK_THROWS_AS(sample_size_simulation(req, 9), Error);
}

TEST_CASE("data checks and csv") {
  std::vector<PairedScores> two{{"a", 0, 0.1, 0, 0.1}, {"b", 1, 0.1, 1, 0.1}};
  CHECK_THROWS_AS(fit_icc_model(two, {}, reduced(1)), Error);
  two.push_back({"c", 0.5, 0.0, 0.5, 0.1});
  CHECK_THROWS_AS(fit_icc_model(two, {}, reduced(1)), Error);

  const auto data = simulate_retest({5, 0.0, 1.0, 0.33, 0.2}, 10);
  const auto dir = testutil::temp_dir("paired");
  write_paired_scores(data, dir / "p.csv");
  const auto back = read_paired_scores(dir / "p.csv");
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].person_id == data[i].person_id);
    CHECK(back[i].theta_1 == data[i].theta_1);
    CHECK(back[i].se_2 == data[i].se_2);
  }
  {
    std::ofstream out(dir / "bad.csv");
    out << "id,t1,s1,t2,s2\nx,1,1,1,1\n";
  }
  CHECK_THROWS_AS(read_paired_scores(dir / "bad.csv"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generators are deterministic") {
  const auto a = simulate_validity({}, 3), b = simulate_validity({}, 3);
  CHECK(a.size() == 200);
  CHECK(a[17].theta_2 == b[17].theta_2);
  CHECK_THROWS_AS(simulate_validity({10, 0, 1, 1, 1.5, 0.1, 0.1}, 1), Error);
}

}  // TEST_SUITE
