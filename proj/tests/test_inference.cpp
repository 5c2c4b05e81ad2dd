#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "hazdid/inference.hpp"
#include "hazdid/simulate.hpp"
#include "oracles.hpp"

using namespace hazdid;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

BootstrapOptions boot(int B, std::uint64_t seed, unsigned threads = 1, double level = 0.95) {
  BootstrapOptions o;
  o.replicates = B;
  o.seed = seed;
  o.threads = threads;
  o.level = level;
  return o;
}

ValidatedPanel sim_panel(std::size_t n, std::uint64_t seed) { return require_valid(simulate_panel(SimParams::table1(n), seed)); }

}  // namespace

TEST(Resample, SingleIndividualAndDeterminism) {
  auto one = resample_indices(1, 9, 4);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], 0u);
  EXPECT_EQ(resample_indices(500, 42, 3), resample_indices(500, 42, 3));
  EXPECT_NE(resample_indices(500, 42, 3), resample_indices(500, 42, 4));
  EXPECT_NE(resample_indices(500, 42, 3), resample_indices(500, 43, 3));
  std::vector<std::uint32_t> counts;
  resample_counts(500, 42, 3, counts);
  std::vector<std::uint32_t> ref(500, 0);
  for (auto i : resample_indices(500, 42, 3)) ++ref[i];
  EXPECT_EQ(counts, ref);
}

TEST(Resample, SelectionFrequenciesWithinBinomialBounds) {
  const std::size_t n = 10000;
  const int B = 1000;
  std::vector<double> hits(n, 0);
  for (int b = 0; b < B; ++b)
    for (auto i : resample_indices(n, 2024, static_cast<std::uint64_t>(b))) hits[i] += 1;
  // each draw picks index i w.p. 1/n; over n*B draws the count is Binomial(nB, 1/n)
  const double mean = B, sd = std::sqrt(B * (1 - 1.0 / n));
  std::size_t outside = 0;
  for (double h : hits) outside += std::abs(h - mean) > 3 * sd;
  // about 0.27% expected beyond 3 sd
  EXPECT_LT(outside, n * 6 / 1000);
  double total = 0;
  for (double h : hits) total += h;
  EXPECT_EQ(total, static_cast<double>(n) * B);
}

TEST(Quantile, Type7) {
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_type7({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4, 5}, 0.95), 4.8);
  EXPECT_DOUBLE_EQ(quantile_type7({7}, 0.3), 7.0);
}

TEST(Bands, DegenerateReplicatesGiveZeroWidth) {
  std::vector<double> point{0.1, 0.2};
  std::vector<std::vector<double>> reps(10, point);
  auto s = studentized_bands(point, reps, 0.95);
  EXPECT_NEAR(s.se[0], 0.0, 1e-15);
  EXPECT_EQ(s.uniform_q, 0.0);
}

TEST(Bootstrap, SymmetryNestingAndScheduleIndependence) {
  for (std::uint64_t seed : {1ull, 77ull, 123456789ull}) {
    auto p = sim_panel(600, seed);
    for (auto m : {Method::HazardDid, Method::StandardDid, Method::PropHazard}) {
      EstimatorConfig cfg;
      cfg.method = m;
      auto a = bootstrap_effects(p, cfg, boot(120, seed + 1, 1));
      auto b = bootstrap_effects(p, cfg, boot(120, seed + 1, 4));
      EXPECT_TRUE(same_bits(a.se, b.se));
      EXPECT_TRUE(same_bits(a.uniform_lo, b.uniform_lo));
      EXPECT_TRUE(same_bits(a.pointwise_hi, b.pointwise_hi));
      for (std::size_t t = 0; t < a.effect.size(); ++t) {
        EXPECT_NEAR(0.5 * (a.uniform_lo[t] + a.uniform_hi[t]), a.effect[t], 1e-12);
        EXPECT_NEAR(0.5 * (a.pointwise_lo[t] + a.pointwise_hi[t]), a.effect[t], 1e-12);
        EXPECT_LE(a.uniform_lo[t], a.pointwise_lo[t]);
        EXPECT_GE(a.uniform_hi[t], a.pointwise_hi[t]);
      }
    }
  }
}

TEST(Bootstrap, BandsWidenWithLevel) {
  auto p = sim_panel(800, 4);
  EstimatorConfig cfg;
  auto lo = bootstrap_effects(p, cfg, boot(200, 9, 0, 0.5));
  auto hi = bootstrap_effects(p, cfg, boot(200, 9, 0, 0.95));
  EXPECT_TRUE(same_bits(lo.se, hi.se));
  for (std::size_t t = 0; t < lo.effect.size(); ++t) {
    EXPECT_LE(hi.uniform_lo[t], lo.uniform_lo[t]);
    EXPECT_GE(hi.uniform_hi[t], lo.uniform_hi[t]);
  }
}

TEST(Bootstrap, CovariateWeightsRefitPerReplicate) {
  auto p = require_valid(simulate_panel(SimParams::stratified(800), 21));
  EstimatorConfig cfg;
  cfg.adjust.kind = CovariateAdjustment::Kind::Discrete;
  cfg.adjust.covariate = "d_stratum";
  auto r = bootstrap_effects(p, cfg, boot(100, 5, 0));
  EXPECT_GT(r.estimates.dropped_overlap, 0);
  EXPECT_EQ(r.failed, 0);
  for (double s : r.se) EXPECT_GT(s, 0);
}

TEST(Bootstrap, RefusesBandsUnderBindingInequality) {
  // H1 = 1.3 H2 - 0.3 H3 lies outside the simplex: nonneg binds on W3
  auto m = oracle::means_from_cumulative(
      10, {0.2, 0.2, 0.2},
      {[](int t) { return 1.3 * oracle::wiggly_cumulative(t, 1.0) - 0.3 * 0.06 * (t - 1); },
       [](int t) { return oracle::wiggly_cumulative(t, 1.0); }, [](int t) { return 0.06 * (t - 1); }});
  // build a panel of 3 groups realising these means approximately
  PanelDataset raw;
  raw.periods = 10;
  raw.t_star = 7;
  const std::size_t per = 2000;
  for (int k = 1; k <= 3; ++k)
    for (std::size_t j = 0; j < per; ++j) {
      raw.ids.push_back(std::to_string(raw.ids.size() + 1));
      raw.groups.push_back(k);
      const double u = (j + 0.5) / per;
      int absorbed = 11;
      for (int t = 10; t >= 1; --t)
        if (u < m.mean(k, t)) absorbed = t;
      for (int t = 1; t <= 10; ++t) raw.outcomes.push_back(t >= absorbed);
    }
  raw.individuals = raw.groups.size();
  auto p = require_valid(raw);
  EstimatorConfig cfg;
  cfg.method = Method::LinearRestriction;
  cfg.constraints.zero_intercept = true;
  cfg.constraints.nonnegative = true;
  cfg.constraints.sum_to_one = true;
  auto e = estimate(p, cfg);
  ASSERT_TRUE(e.inequality_active);
  EXPECT_THROW(bootstrap_effects(p, cfg, boot(50, 1)), Error);
  auto opt = boot(50, 1);
  opt.force = true;
  auto forced = bootstrap_effects(p, cfg, opt);
  bool warned = false;
  for (const auto& w : forced.warnings) warned = warned || w.find("binding inequality") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(Bootstrap, FailedReplicatesAreCountedAndWarned) {
  // group 2 small with most members absorbed late: some resamples lose every survivor
  PanelDataset raw;
  raw.periods = 4;
  raw.t_star = 3;
  auto add = [&](int g, int absorbed) {
    raw.ids.push_back(std::to_string(raw.ids.size() + 1));
    raw.groups.push_back(g);
    for (int t = 1; t <= 4; ++t) raw.outcomes.push_back(t >= absorbed);
  };
  for (int j = 0; j < 30; ++j) add(1, j % 3 == 0 ? 2 : 5);
  add(2, 5);
  add(2, 3);
  add(2, 1);
  raw.individuals = raw.groups.size();
  auto p = require_valid(raw);
  auto r = bootstrap_effects(p, {}, boot(200, 3));
  EXPECT_GT(r.failed, 10);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.back().find("failed"), std::string::npos);
}

TEST(SpecTest, IdenticalGroupsNeverReject) {
  std::mt19937_64 rng(6);
  oracle::PanelSpec spec;
  spec.n = 200;
  spec.groups = 1;
  spec.periods = 10;
  auto raw = oracle::random_panel(rng, spec);
  auto dup = raw;
  for (std::size_t i = 0; i < raw.individuals; ++i) {
    dup.ids.push_back("c" + raw.ids[i]);
    dup.groups.push_back(2);
    for (int t = 1; t <= raw.periods; ++t) dup.outcomes.push_back(static_cast<std::uint8_t>(raw.outcome(i, t)));
  }
  dup.individuals *= 2;
  dup.t_star = 7;
  auto p = require_valid(dup);
  for (auto mode : {TestMode::Hazard, TestMode::Mean}) {
    auto r = parallel_trends_test(p, mode, {}, boot(100, 8));
    EXPECT_FALSE(r.reject);
    for (double d : r.delta) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(r.periods.front(), 2);
    EXPECT_EQ(r.periods.back(), 6);  // reference row t* - 1
    EXPECT_EQ(r.delta.back(), 0.0);
  }
}

TEST(SpecTest, RequiresTestablePrePeriods) {
  auto raw = simulate_panel(SimParams::table1(200), 1);
  raw.t_star = 3;
  auto p = require_valid(raw);
  try {
    parallel_trends_test(p, TestMode::Hazard, {}, boot(20, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "no testable pre-periods");
  }
}

TEST(SpecTest, DeltaMatchesDefinition) {
  auto p = sim_panel(1000, 31);
  auto r = parallel_trends_test(p, TestMode::Hazard, {}, boot(50, 2));
  auto m = group_means(p);
  const int ref = p.t_star() - 1;
  auto gap = [&](int t) { return time_average_hazard(m, 1, t) - time_average_hazard(m, 2, t); };
  for (std::size_t j = 0; j + 1 < r.periods.size(); ++j)
    EXPECT_NEAR(r.delta[j], gap(r.periods[j]) - gap(ref), 1e-15);
  auto a = parallel_trends_test(p, TestMode::Mean, {}, boot(80, 2, 1));
  auto b = parallel_trends_test(p, TestMode::Mean, {}, boot(80, 2, 3));
  EXPECT_TRUE(same_bits(a.lo, b.lo));
  EXPECT_EQ(a.critical_value, b.critical_value);
}

TEST(SpecTest, NullPanelsMostlyAcceptAtHalfLevel) {
  // null panels at level 0.5: over seeds, most runs accept
  int accept = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto p = sim_panel(1000, 500 + s);
    accept += parallel_trends_test(p, TestMode::Hazard, {}, boot(100, s, 0, 0.5)).reject ? 0 : 1;
  }
  EXPECT_GE(accept, 3);
}
