#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hazdid/error.hpp"
#include "hazdid/estimators.hpp"
#include "hazdid/inference.hpp"
#include "hazdid/panel.hpp"
#include "hazdid/parallel.hpp"
#include "hazdid/quadrature.hpp"
#include "hazdid/rng.hpp"

namespace hazdid {

// Optional covariate strata. Each stratum adds `shift` to the hazard
// numerator of both groups, so the within-stratum level gap stays c while the
// marginal gap drifts when the groups' stratum mixes differ.
struct Stratum {
  std::string label;
  double shift = 0;
  double share_treated = 0;
  double share_untreated = 0;
};

struct SimParams {
  std::size_t n = 1000;
  int periods = 20;
  int t_star = 11;
  double y1_treated = 0.4;
  double y1_untreated = 0.2;
  double c = 0.5;
  double beta = 1.0;
  double treated_share = 0.5;  // first ceil(n * share) individuals are treated
  double quadrature_tol = 1e-10;
  std::vector<Stratum> strata;

  // Reference parameters with `n` individuals in total.
  static SimParams table1(std::size_t n = 1000) {
    SimParams p;
    p.n = n;
    return p;
  }

  // Reference parameters sized per group: 2 * per_group individuals split evenly.
  static SimParams table1_row(std::size_t per_group) { return table1(2 * per_group); }

  // Reference parameters with three covariate strata whose mix differs by group. Stratum
  // C holds only treated individuals, so it falls outside the overlap set.
  static SimParams stratified(std::size_t n = 2000) {
    SimParams p = table1(n);
    p.strata = {{"A", -0.3, 0.6, 0.3}, {"B", 0.4, 0.3, 0.7}, {"C", 0.0, 0.1, 0.0}};
    return p;
  }

  double initial_share(int k) const { return k == 1 ? y1_treated : y1_untreated; }

  void validate() const {
    if (n < 2) throw Error("simulation needs n >= 2");
    if (t_star < 3 || t_star > periods) throw Error("simulation needs 3 <= t_star <= T");
    for (double y : {y1_treated, y1_untreated})
      if (!(y >= 0 && y < 1)) throw Error("initial shares must lie in [0,1)");
    if (!std::isfinite(c) || !std::isfinite(beta)) throw Error("c and beta must be finite");
    if (!(treated_share > 0 && treated_share < 1)) throw Error("treated share must lie in (0,1)");
    if (!strata.empty()) {
      double s1 = 0, s2 = 0;
      for (const auto& s : strata) {
        if (s.share_treated < 0 || s.share_untreated < 0) throw Error("stratum shares must be nonnegative");
        s1 += s.share_treated;
        s2 += s.share_untreated;
      }
      if (std::abs(s1 - 1) > 1e-9 || std::abs(s2 - 1) > 1e-9) throw Error("stratum shares must sum to 1 per group");
    }
  }
};

// h(t) = (1 + sqrt(t/T) - (t/T - 1/2)^2 / 2 + [k=1] c + [factual, k=1] beta 1{t >= t*}) / (T - 1)
inline double dgp_hazard(double t, int k, bool factual, const SimParams& p, double stratum_shift = 0) {
  const double T = p.periods;
  const double u = t / T;
  double level = 1.0 + std::sqrt(u) - 0.5 * (u - 0.5) * (u - 0.5) + stratum_shift;
  if (k == 1) {
    level += p.c;
    if (factual && t >= p.t_star) level += p.beta;
  }
  return level / (T - 1.0);
}

// Integral of the hazard over [a, b], split at t* where the treatment step sits.
inline double integrated_hazard(double a, double b, int k, bool factual, const SimParams& p, double stratum_shift = 0) {
  auto h = [&](double s) { return dgp_hazard(s, k, factual, p, stratum_shift); };
  const double step = p.t_star;
  // The step is a left-closed indicator; evaluating the left piece just below
  // t* keeps its endpoint untreated.
  if (k == 1 && factual && a < step && step < b) {
    auto below = [&](double s) { return dgp_hazard(std::min(s, std::nextafter(step, a)), k, factual, p, stratum_shift); };
    return adaptive_simpson(below, a, step, 0.5 * p.quadrature_tol) + adaptive_simpson(h, step, b, 0.5 * p.quadrature_tol);
  }
  if (k == 1 && factual && b == step) {
    auto below = [&](double s) { return dgp_hazard(std::min(s, std::nextafter(step, a)), k, factual, p, stratum_shift); };
    return adaptive_simpson(below, a, b, p.quadrature_tol);
  }
  return adaptive_simpson(h, a, b, p.quadrature_tol);
}

// P(Y_{t+1} = 1 | Y_t = 0, G = k) = 1 - exp(-int_t^{t+1} h).
inline double transition_probability(int t, int k, bool factual, const SimParams& p, double stratum_shift = 0) {
  if (t < 1 || t >= p.periods) throw Error("transition defined for 1 <= t < T");
  return -std::expm1(-integrated_hazard(t, t + 1, k, factual, p, stratum_shift));
}

// Exact mean outcomes by recursion m_{t+1} = m_t + (1 - m_t) P_t, mixed
// over strata when present. Group 1 is factual or counterfactual per flag.
inline GroupMeanSeries population_means(const SimParams& p, bool factual) {
  p.validate();
  const int T = p.periods;
  GroupMeanSeries out;
  out.periods = T;
  out.sizes = {1.0, 1.0};
  out.values.assign(2, std::vector<double>(static_cast<std::size_t>(T), 0.0));
  const std::vector<Stratum> strata = p.strata.empty() ? std::vector<Stratum>{{"all", 0.0, 1.0, 1.0}} : p.strata;
  for (int k = 1; k <= 2; ++k)
    for (const auto& s : strata) {
      const double share = k == 1 ? s.share_treated : s.share_untreated;
      if (share == 0) continue;
      double m = p.initial_share(k);
      for (int t = 1; t <= T; ++t) {
        out.values[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 1)] += share * m;
        if (t < T) m += (1.0 - m) * transition_probability(t, k, factual, p, s.shift);
      }
    }
  return out;
}

// True effects tau_t = m_{1,t}(factual) - m_{1,t}(counterfactual), t = t*..T.
inline std::vector<double> true_effects(const SimParams& p) {
  const auto fact = population_means(p, true);
  const auto cf = population_means(p, false);
  std::vector<double> tau;
  for (int t = p.t_star; t <= p.periods; ++t) tau.push_back(fact.mean(1, t) - cf.mean(1, t));
  return tau;
}

// Draws a panel from the DGP. Group 1 follows factual transitions.
inline PanelDataset simulate_panel(const SimParams& p, std::uint64_t seed) {
  p.validate();
  const int T = p.periods;
  const auto treated = static_cast<std::size_t>(std::ceil(static_cast<double>(p.n) * p.treated_share));
  const std::vector<Stratum> strata = p.strata.empty() ? std::vector<Stratum>{{"all", 0.0, 1.0, 1.0}} : p.strata;

  // transition[k-1][stratum][t-1]
  std::vector<std::vector<std::vector<double>>> transition(2);
  for (int k = 1; k <= 2; ++k)
    for (const auto& s : strata) {
      std::vector<double> row(static_cast<std::size_t>(T - 1));
      for (int t = 1; t < T; ++t) row[static_cast<std::size_t>(t - 1)] = transition_probability(t, k, true, p, s.shift);
      transition[static_cast<std::size_t>(k - 1)].push_back(std::move(row));
    }

  PanelDataset out;
  out.individuals = p.n;
  out.periods = T;
  out.t_star = p.t_star;
  out.ids.reserve(p.n);
  out.groups.resize(p.n);
  out.outcomes.assign(p.n * static_cast<std::size_t>(T), 0);
  Covariate stratum_cov;
  if (!p.strata.empty()) {
    stratum_cov.name = "d_stratum";
    stratum_cov.kind = CovariateKind::Discrete;
    for (const auto& s : p.strata) stratum_cov.levels.push_back(s.label);
    std::sort(stratum_cov.levels.begin(), stratum_cov.levels.end());
    stratum_cov.codes.resize(p.n);
  }

  Rng rng(derive_seed(seed, streams::kSimulate, 0));
  for (std::size_t i = 0; i < p.n; ++i) {
    out.ids.push_back(std::to_string(i + 1));
    const int k = i < treated ? 1 : 2;
    out.groups[i] = k;
    std::size_t s = 0;
    if (!p.strata.empty()) {
      const double u = rng.uniform();
      double acc = 0;
      s = strata.size() - 1;
      for (std::size_t j = 0; j < strata.size(); ++j) {
        acc += k == 1 ? strata[j].share_treated : strata[j].share_untreated;
        if (u < acc) {
          s = j;
          break;
        }
      }
      while ((k == 1 ? strata[s].share_treated : strata[s].share_untreated) == 0) --s;
      stratum_cov.codes[i] = static_cast<int>(
          std::lower_bound(stratum_cov.levels.begin(), stratum_cov.levels.end(), strata[s].label) -
          stratum_cov.levels.begin());
    }
    int absorbed = rng.bernoulli(p.initial_share(k)) ? 1 : T + 1;
    const auto& probs = transition[static_cast<std::size_t>(k - 1)][s];
    for (int t = 1; t < T && absorbed > T; ++t)
      if (rng.bernoulli(probs[static_cast<std::size_t>(t - 1)])) absorbed = t + 1;
    for (int t = absorbed; t <= T; ++t) out.set_outcome(i, t, 1);
  }
  if (!p.strata.empty()) out.covariates.push_back(std::move(stratum_cov));
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness
// ---------------------------------------------------------------------------

struct MonteCarloOptions {
  int reps = 1000;
  int bootstrap = 500;
  std::uint64_t seed = 0;
  double level = 0.95;
  unsigned threads = 0;
  bool keep_replicates = false;
};

struct EstimatorMetrics {
  Method method = Method::HazardDid;
  double abs_bias = 0;         // mean over t of |mean over reps (tau_hat - tau)|
  double mean_abs_error = 0;   // mean over reps, t of |tau_hat - tau|
  double mse = 0;
  double uniform_coverage = 0;
  double pointwise_coverage = 0;
  double pt_rejection = 0;
  int completed = 0;
  int failed = 0;
};

struct ReplicateRecord {
  int rep = 0;
  Method method = Method::HazardDid;
  bool ok = false;
  std::vector<double> effect;
  bool uniform_covered = false;
  int pointwise_covered = 0;
  bool pt_reject = false;
  int bootstrap_failed = 0;
};

struct MetricsTable {
  SimParams params;
  MonteCarloOptions options;
  std::vector<int> periods;
  std::vector<double> true_effect;
  std::vector<EstimatorMetrics> rows;
  std::vector<ReplicateRecord> replicates;  // filled when keep_replicates
};

inline MetricsTable monte_carlo(const SimParams& p, const MonteCarloOptions& opt) {
  p.validate();
  if (opt.reps < 1) throw Error("need at least one Monte Carlo replicate");
  MetricsTable table;
  table.params = p;
  table.options = opt;
  table.true_effect = true_effects(p);
  for (int t = p.t_star; t <= p.periods; ++t) table.periods.push_back(t);
  const std::size_t m = table.true_effect.size();

  const std::vector<Method> methods{Method::HazardDid, Method::StandardDid};
  const auto reps = static_cast<std::size_t>(opt.reps);
  std::vector<ReplicateRecord> records(reps * methods.size());

  parallel_for(reps, resolve_threads(opt.threads), [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(opt.seed, streams::kReplicate, r);
    std::optional<ValidatedPanel> panel;
    try {
      panel = require_valid(simulate_panel(p, rep_seed));
    } catch (const Error&) {
    }
    for (std::size_t e = 0; e < methods.size(); ++e) {
      auto& rec = records[r * methods.size() + e];
      rec.rep = static_cast<int>(r);
      rec.method = methods[e];
      if (!panel) continue;
      EstimatorConfig cfg;
      cfg.method = methods[e];
      BootstrapOptions bo;
      bo.replicates = opt.bootstrap;
      bo.level = opt.level;
      bo.threads = 1;
      try {
        bo.seed = derive_seed(rep_seed, streams::kBootstrap, 2 * e);
        const auto inf = bootstrap_effects(*panel, cfg, bo);
        bo.seed = derive_seed(rep_seed, streams::kBootstrap, 2 * e + 1);
        const auto test = parallel_trends_test(
            *panel, methods[e] == Method::StandardDid ? TestMode::Mean : TestMode::Hazard, cfg, bo);
        rec.effect = inf.effect;
        rec.uniform_covered = true;
        for (std::size_t t = 0; t < m; ++t) {
          const double tau = table.true_effect[t];
          const bool pw = inf.pointwise_lo[t] <= tau && tau <= inf.pointwise_hi[t];
          const bool un = inf.uniform_lo[t] <= tau && tau <= inf.uniform_hi[t];
          rec.pointwise_covered += pw ? 1 : 0;
          rec.uniform_covered = rec.uniform_covered && un;
        }
        rec.pt_reject = test.reject;
        rec.bootstrap_failed = inf.failed + test.failed;
        rec.ok = true;
      } catch (const Error&) {
        rec.ok = false;
      }
    }
  });

  for (std::size_t e = 0; e < methods.size(); ++e) {
    EstimatorMetrics row;
    row.method = methods[e];
    std::vector<double> mean_err(m, 0.0);
    double abs_err = 0, sq_err = 0, uni = 0, pw = 0, rej = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& rec = records[r * methods.size() + e];
      if (!rec.ok) {
        ++row.failed;
        continue;
      }
      ++row.completed;
      for (std::size_t t = 0; t < m; ++t) {
        const double err = rec.effect[t] - table.true_effect[t];
        mean_err[t] += err;
        abs_err += std::abs(err);
        sq_err += err * err;
      }
      uni += rec.uniform_covered ? 1 : 0;
      pw += static_cast<double>(rec.pointwise_covered) / static_cast<double>(m);
      rej += rec.pt_reject ? 1 : 0;
    }
    if (row.completed > 0) {
      const double R = row.completed;
      for (double v : mean_err) row.abs_bias += std::abs(v / R);
      row.abs_bias /= static_cast<double>(m);
      row.mean_abs_error = abs_err / (R * static_cast<double>(m));
      row.mse = sq_err / (R * static_cast<double>(m));
      row.uniform_coverage = uni / R;
      row.pointwise_coverage = pw / R;
      row.pt_rejection = rej / R;
    }
    table.rows.push_back(row);
  }
  if (opt.keep_replicates) table.replicates = std::move(records);
  return table;
}

}  // namespace hazdid
