#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hazdid/error.hpp"
#include "hazdid/estimators.hpp"
#include "hazdid/panel.hpp"
#include "hazdid/parallel.hpp"
#include "hazdid/rng.hpp"

namespace hazdid {

// n draws with replacement from {0..n-1} (0-based), a pure function of
// (master_seed, b).
inline std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t master_seed, std::uint64_t b) {
  if (n == 0) throw Error("cannot resample an empty panel");
  Rng rng(derive_seed(master_seed, streams::kBootstrap, b));
  std::vector<std::size_t> out(n);
  for (auto& j : out) j = rng.below(n);
  return out;
}

// Same draws folded into per-individual multiplicities.
inline void resample_counts(std::size_t n, std::uint64_t master_seed, std::uint64_t b, std::vector<std::uint32_t>& counts) {
  if (n == 0) throw Error("cannot resample an empty panel");
  counts.assign(n, 0);
  Rng rng(derive_seed(master_seed, streams::kBootstrap, b));
  for (std::size_t i = 0; i < n; ++i) ++counts[rng.below(n)];
}

struct BootstrapOptions {
  int replicates = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;
  unsigned threads = 0;  // 0: HAZDID_THREADS or hardware
  bool force = false;    // report bands even when an inequality constraint binds
};

// Type-7 (linear interpolation) sample quantile.
inline double quantile_type7(std::vector<double> x, double prob) {
  if (x.empty()) throw Error("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// Studentized bootstrap bands around a point estimate vector.
struct BandSummary {
  std::vector<double> se;
  std::vector<double> pointwise_q;
  double uniform_q = 0;
  std::size_t used = 0;
};

inline BandSummary studentized_bands(const std::vector<double>& point, const std::vector<std::vector<double>>& reps,
                                     double level) {
  const std::size_t m = point.size();
  const std::size_t B = reps.size();
  if (B < 2) throw Error("need at least two successful bootstrap replicates");
  BandSummary s;
  s.used = B;
  s.se.assign(m, 0.0);
  for (std::size_t t = 0; t < m; ++t) {
    double mean = 0;
    for (const auto& r : reps) mean += r[t];
    mean /= static_cast<double>(B);
    double ss = 0;
    for (const auto& r : reps) ss += (r[t] - mean) * (r[t] - mean);
    s.se[t] = std::sqrt(ss / static_cast<double>(B - 1));
  }
  std::vector<std::vector<double>> dev(m, std::vector<double>(B));
  std::vector<double> maxdev(B, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < m; ++t) {
      const double d = s.se[t] > 0 ? std::abs(reps[b][t] - point[t]) / s.se[t] : 0.0;
      dev[t][b] = d;
      maxdev[b] = std::max(maxdev[b], d);
    }
  s.pointwise_q.resize(m);
  for (std::size_t t = 0; t < m; ++t) s.pointwise_q[t] = quantile_type7(dev[t], level);
  s.uniform_q = m > 0 ? quantile_type7(maxdev, level) : 0.0;
  return s;
}

// Runs statistic(multiplicities) on B resamples. Failed replicates (Error)
// are dropped and counted; slots are index-addressed so the result does not
// depend on scheduling.
struct ReplicateSet {
  std::vector<std::vector<double>> values;  // successful replicates, in b order
  int failed = 0;
};

inline ReplicateSet run_replicates(std::size_t n, const BootstrapOptions& opt,
                                   const std::function<std::vector<double>(Multiplicity)>& statistic) {
  if (opt.replicates < 2) throw Error("need at least two bootstrap replicates");
  const auto B = static_cast<std::size_t>(opt.replicates);
  std::vector<std::optional<std::vector<double>>> slots(B);
  parallel_for(B, resolve_threads(opt.threads), [&](std::size_t b) {
    std::vector<std::uint32_t> counts;
    resample_counts(n, opt.seed, b, counts);
    try {
      slots[b] = statistic(counts);
    } catch (const Error&) {
      slots[b].reset();
    }
  });
  ReplicateSet out;
  for (auto& s : slots) {
    if (s)
      out.values.push_back(std::move(*s));
    else
      ++out.failed;
  }
  return out;
}

inline constexpr double kFailureWarningShare = 0.05;

struct InferenceResult {
  EffectEstimates estimates;
  std::vector<int> periods;
  std::vector<double> effect, se;
  std::vector<double> pointwise_lo, pointwise_hi;
  std::vector<double> uniform_lo, uniform_hi;
  std::vector<double> pointwise_q;
  double uniform_q = 0;
  int replicates = 0;
  int failed = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::vector<std::string> warnings;
};

// Block bootstrap over individuals: standard errors, pointwise and uniform
// (max-studentized) bands for the post-treatment effects. Covariate weights
// are refitted inside every replicate.
inline InferenceResult bootstrap_effects(const ValidatedPanel& p, const EstimatorConfig& cfg, const BootstrapOptions& opt) {
  if (!(opt.level > 0 && opt.level < 1)) throw Error("level must lie in (0,1)");
  InferenceResult r;
  r.estimates = estimate(p, cfg);
  if (r.estimates.inequality_active && !opt.force)
    throw Error("inequality constraint binds: bootstrap bands are not valid (use force to override)");
  r.periods = r.estimates.periods;
  r.effect = r.estimates.effect;
  r.seed = opt.seed;
  r.level = opt.level;
  r.replicates = opt.replicates;
  r.warnings = r.estimates.warnings;
  if (r.estimates.inequality_active) r.warnings.push_back("bands reported under a binding inequality constraint");

  const std::size_t m = r.effect.size();
  auto reps = run_replicates(p.individuals(), opt, [&](Multiplicity mult) {
    auto e = estimate(p, cfg, mult);
    if (e.effect.size() != m) throw Error("replicate horizon mismatch");
    return e.effect;
  });
  r.failed = reps.failed;
  if (static_cast<double>(reps.failed) > kFailureWarningShare * opt.replicates)
    r.warnings.push_back(std::to_string(reps.failed) + " of " + std::to_string(opt.replicates) +
                         " bootstrap replicates failed; bands may be unreliable");
  const auto bands = studentized_bands(r.effect, reps.values, opt.level);
  r.se = bands.se;
  r.pointwise_q = bands.pointwise_q;
  r.uniform_q = bands.uniform_q;
  for (std::size_t t = 0; t < m; ++t) {
    r.pointwise_lo.push_back(r.effect[t] - bands.pointwise_q[t] * r.se[t]);
    r.pointwise_hi.push_back(r.effect[t] + bands.pointwise_q[t] * r.se[t]);
    r.uniform_lo.push_back(r.effect[t] - bands.uniform_q * r.se[t]);
    r.uniform_hi.push_back(r.effect[t] + bands.uniform_q * r.se[t]);
  }
  return r;
}

enum class TestMode { Hazard, Mean };

inline std::string to_string(TestMode m) { return m == TestMode::Hazard ? "hazard" : "mean"; }

struct SpecTestResult {
  TestMode mode = TestMode::Hazard;
  std::vector<int> periods;  // first_pre .. t*-1; the last row is the reference
  std::vector<double> delta, se, lo, hi;
  double critical_value = 0;
  bool reject = false;
  double level = 0.95;
  int replicates = 0;
  int failed = 0;
  std::uint64_t seed = 0;
  double dropped_overlap = 0;
  std::vector<std::string> warnings;
};

// delta_t = (S_{1,t} - S_{2,t}) - (S_{1,t*-1} - S_{2,t*-1}) for t in the
// tested range, with S = time-average hazard (hazard mode) or group mean.
inline std::vector<double> pretrend_deltas(const EstimationInputs& in, TestMode mode, int first) {
  const int ref = in.t_star - 1;
  auto gap = [&](int t) {
    return mode == TestMode::Hazard ? in.hazards.at(1, t) - in.hazards.at(2, t)
                                    : in.means.mean(1, t) - in.means.mean(2, t);
  };
  const double base = gap(ref);
  std::vector<double> out;
  for (int t = first; t <= ref - 1; ++t) out.push_back(gap(t) - base);
  return out;
}

// Bootstrap test of parallel pre-treatment trends. Rejects when a uniform
// band over t = first..t*-2 excludes zero.
inline SpecTestResult parallel_trends_test(const ValidatedPanel& p, TestMode mode, const EstimatorConfig& cfg,
                                           const BootstrapOptions& opt) {
  if (p.t_star() < 4) throw Error("no testable pre-periods");
  if (!(opt.level > 0 && opt.level < 1)) throw Error("level must lie in (0,1)");
  const int first = cfg.window.first_pre.value_or(2);
  if (first < 2 || first > p.t_star() - 2) throw Error("no testable pre-periods");
  EstimatorConfig use = cfg;
  if (mode == TestMode::Mean) use.adjust = {};
  if (use.adjust.kind != CovariateAdjustment::Kind::Off) use.method = Method::HazardDid;

  const auto full = prepare_inputs(p, use);
  SpecTestResult r;
  r.mode = mode;
  r.level = opt.level;
  r.seed = opt.seed;
  r.replicates = opt.replicates;
  r.dropped_overlap = full.dropped_overlap;
  r.warnings = full.warnings;
  const auto delta = pretrend_deltas(full, mode, first);
  auto reps = run_replicates(p.individuals(), opt, [&](Multiplicity mult) {
    return pretrend_deltas(prepare_inputs(p, use, mult), mode, first);
  });
  r.failed = reps.failed;
  if (static_cast<double>(reps.failed) > kFailureWarningShare * opt.replicates)
    r.warnings.push_back(std::to_string(reps.failed) + " of " + std::to_string(opt.replicates) +
                         " bootstrap replicates failed; test may be unreliable");
  const auto bands = studentized_bands(delta, reps.values, opt.level);
  r.critical_value = bands.uniform_q;
  for (std::size_t j = 0; j < delta.size(); ++j) {
    r.periods.push_back(first + static_cast<int>(j));
    r.delta.push_back(delta[j]);
    r.se.push_back(bands.se[j]);
    r.lo.push_back(delta[j] - bands.uniform_q * bands.se[j]);
    r.hi.push_back(delta[j] + bands.uniform_q * bands.se[j]);
    if (r.lo.back() > 0 || r.hi.back() < 0) r.reject = true;
  }
  r.periods.push_back(p.t_star() - 1);
  r.delta.push_back(0.0);
  r.se.push_back(0.0);
  r.lo.push_back(0.0);
  r.hi.push_back(0.0);
  return r;
}

}  // namespace hazdid
