#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hazdid/hazard.hpp"
#include "hazdid/simulate.hpp"
#include "hazdid/weighting.hpp"
#include "oracles.hpp"

using namespace hazdid;

TEST(TimeAverageHazard, ClosedForms) {
  EXPECT_NEAR(time_average_hazard(0.0, 1.0 - std::exp(-1.0), 3), 0.5, 1e-15);
  EXPECT_EQ(time_average_hazard(0.3, 0.3, 6), 0.0);
  EXPECT_NEAR(time_average_hazard(0.2, 0.6, 5), std::log(2.0) / 4.0, 1e-15);
  EXPECT_NEAR(time_average_hazard(0.2, 0.6, 5), 0.173287, 1e-6);
}

TEST(TimeAverageHazard, Errors) {
  try {
    time_average_hazard(0.1, 1.0, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("survivor share zero"), std::string::npos);
  }
  try {
    time_average_hazard(0.1, 0.2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined at initial period"), std::string::npos);
  }
}

TEST(InvertHazard, Examples) {
  EXPECT_EQ(invert_hazard_to_mean(0.4, 0.0, 7), 0.4);
  EXPECT_NEAR(invert_hazard_to_mean(0.4, 0.1, 11), 1.0 - 0.6 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(invert_hazard_to_mean(0.4, 0.1, 11), 0.7792723, 1e-7);
  // negative hazards pass through below the initial share
  EXPECT_LT(invert_hazard_to_mean(0.4, -0.05, 5), 0.4);
}

TEST(InvertHazard, RoundTripOnRandomPanels) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    oracle::PanelSpec spec;
    spec.n = 200;
    spec.periods = 12;
    auto p = require_valid(oracle::random_panel(rng, spec));
    auto m = group_means(p);
    for (int k = 1; k <= 2; ++k)
      for (int t = 2; t <= 12; ++t) {
        if (m.mean(k, t) >= 1.0) continue;
        const double a = time_average_hazard(m, k, t);
        EXPECT_NEAR(invert_hazard_to_mean(m.mean(k, 1), a, t), m.mean(k, t), 1e-12);
      }
  }
}

TEST(TimeAverageHazard, StrictlyIncreasingInMean) {
  double prev = -1;
  for (double y = 0.2; y < 0.99; y += 0.01) {
    const double h = time_average_hazard(0.2, y, 4);
    EXPECT_GT(h, prev);
    prev = h;
  }
}

TEST(TimeAverageHazard, PopulationIdentityOnDgp) {
  // (1/(t-1)) int_1^t h^(0)_k equals the hazard of the exact population means.
  auto params = SimParams::table1();
  auto means = population_means(params, false);
  for (int k = 1; k <= 2; ++k)
    for (int t = 2; t <= params.periods; ++t) {
      const double exact =
          (oracle::dgp_antiderivative(t, k, false, params) - oracle::dgp_antiderivative(1, k, false, params)) / (t - 1);
      EXPECT_NEAR(time_average_hazard(means, k, t), exact, 1e-8);
    }
}

TEST(HazardSeries, StoresReasonForUndefinedCells) {
  GroupMeanSeries m;
  m.periods = 4;
  m.sizes = {1, 1};
  m.values = {{0.1, 0.5, 1.0, 1.0}, {0.1, 0.2, 0.3, 0.4}};
  auto h = HazardSeries::from_means(m);
  EXPECT_TRUE(h.defined(1, 2));
  EXPECT_FALSE(h.defined(1, 3));
  EXPECT_EQ(h.last_defined_period(), 2);
  EXPECT_THROW(h.at(1, 4), Error);
  EXPECT_NEAR(h.at(2, 4), std::log(0.9 / 0.6) / 3.0, 1e-15);
}

namespace {

PanelDataset tiny_stratified() {
  // 8 individuals, two strata; treated and untreated share the same stratum mix
  PanelDataset p;
  p.individuals = 8;
  p.periods = 4;
  p.t_star = 3;
  p.groups = {1, 1, 1, 1, 2, 2, 2, 2};
  std::vector<int> absorb{5, 3, 4, 2, 5, 4, 3, 5};
  p.outcomes.assign(32, 0);
  for (std::size_t i = 0; i < 8; ++i) {
    p.ids.push_back(std::to_string(i + 1));
    for (int t = absorb[i]; t <= 4; ++t) p.set_outcome(i, t, 1);
  }
  p.covariates.push_back({"d_s", CovariateKind::Discrete, {"a", "b"}, {0, 0, 1, 1, 0, 1, 0, 1}, {}});
  return p;
}

}  // namespace

TEST(WeightedHazard, UnitWeightsMatchUnweighted) {
  auto p = require_valid(tiny_stratified());
  auto w = estimate_discrete_weights(p, "d_s");
  for (double v : w.table->weight) EXPECT_EQ(v, 1.0);
  auto m = group_means(p);
  for (int t = 2; t <= 4; ++t)
    EXPECT_NEAR(weighted_time_average_hazard(p, w, t), time_average_hazard(m, 2, t), 1e-15);
}

TEST(WeightedHazard, BruteForceOnImbalancedPanel) {
  auto raw = tiny_stratified();
  raw.covariates[0].codes = {0, 0, 0, 1, 0, 1, 1, 1};
  auto p = require_valid(raw);
  auto w = estimate_discrete_weights(p, "d_s");
  // survivors at t=1: everyone. treated a:3/4, b:1/4; untreated a:1/4, b:3/4.
  EXPECT_NEAR(w.table->weight[0], 3.0, 1e-15);
  EXPECT_NEAR(w.table->weight[1], 1.0 / 3.0, 1e-15);
  const double om[] = {3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // individuals 5..8
  for (int t = 2; t <= 4; ++t) {
    double surv = 0;
    for (std::size_t j = 0; j < 4; ++j) surv += om[j] * (1 - raw.outcome(4 + j, t));
    surv /= 4.0;
    EXPECT_NEAR(weighted_time_average_hazard(p, w, t), std::log(1.0 / surv) / (t - 1), 1e-14);
  }
}

TEST(WeightedHazard, NonpositiveSurvivorMassAndSupport) {
  auto raw = tiny_stratified();
  // every untreated individual absorbed by t=2 except stratum b at 1
  auto p = require_valid(raw);
  WeightFunction w = estimate_discrete_weights(p, "d_s");
  w.table->weight = {0.0, 0.0};
  EXPECT_THROW(weighted_time_average_hazard(p, w, 3), Error);
  w.table->weight = {1.0, std::nan("")};
  try {
    weighted_control_survival(p, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("support violation"), std::string::npos);
  }
}

TEST(WeightedHazard, StratifiedPopulationIdentity) {
  // Within-stratum hazards differ by the same c across groups while the
  // stratum mix is imbalanced. The weighted control hazard restores
  // H_1 - H~_2 = c/(T-1) exactly.
  SimParams params = SimParams::table1();
  params.strata = {{"A", -0.3, 0.6, 0.3}, {"B", 0.4, 0.3, 0.5}, {"C", 0.1, 0.1, 0.2}};
  const int T = params.periods;
  const double y11 = params.y1_treated, y21 = params.y1_untreated;

  auto treated_rel = [&](int t) {
    double s = 0;
    for (const auto& st : params.strata)
      s += st.share_treated * oracle::dgp_relative_survival(1, false, params, st.shift)[t - 1];
    return s;
  };
  // omega(x) = P(x | survivor, G=1) / P(x | survivor, G=2); initial shares do
  // not vary by stratum so survivor mixes equal the population mixes.
  auto weighted_surv = [&](int t) {
    double s = 0;
    for (const auto& st : params.strata) {
      const double omega = st.share_treated / st.share_untreated;
      s += st.share_untreated * omega * (1 - y21) * oracle::dgp_relative_survival(2, false, params, st.shift)[t - 1];
    }
    return s;
  };
  bool unweighted_off = false;
  auto means = population_means(params, false);
  for (int t = 2; t <= T; ++t) {
    const double h1 = std::log((1 - y11) / ((1 - y11) * treated_rel(t))) / (t - 1);
    EXPECT_NEAR(h1, time_average_hazard(means, 1, t), 1e-8);
    const double h2w = weighted_hazard_from_survival(y21, weighted_surv(t), t);
    EXPECT_NEAR(h1 - h2w, params.c / (T - 1), 1e-8) << "t=" << t;
    unweighted_off = unweighted_off || std::abs(h1 - time_average_hazard(means, 2, t) - params.c / (T - 1)) > 1e-4;
  }
  EXPECT_TRUE(unweighted_off) << "imbalance should break unweighted parallel hazards";
}
