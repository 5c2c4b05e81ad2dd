#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hazdid/error.hpp"
#include "hazdid/hazard.hpp"
#include "hazdid/lsq.hpp"
#include "hazdid/panel.hpp"
#include "hazdid/weighting.hpp"

namespace hazdid {

enum class Method { HazardDid, PropHazard, LinearRestriction, StandardDid };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::HazardDid: return "hazard_did";
    case Method::PropHazard: return "prop_hazard";
    case Method::LinearRestriction: return "linear_restriction";
    case Method::StandardDid: return "standard_did";
  }
  return "?";
}

// Period weights over an estimation window. Equal by default; geometric puts
// weight r^(last - t) on period t so periods near t* count more.
struct PeriodWeighting {
  enum class Scheme { Equal, Geometric, Explicit };
  Scheme scheme = Scheme::Equal;
  double ratio = 1.0;
  std::vector<double> weights;  // Explicit: one per window period
};

inline std::vector<double> resolve_period_weights(const PeriodWeighting& pw, int first, int last) {
  if (last < first) throw Error("empty period-weight window");
  const auto count = static_cast<std::size_t>(last - first + 1);
  std::vector<double> w(count);
  switch (pw.scheme) {
    case PeriodWeighting::Scheme::Equal:
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(count));
      return w;
    case PeriodWeighting::Scheme::Geometric: {
      if (!(pw.ratio > 0)) throw Error("geometric weight ratio must be positive");
      for (std::size_t j = 0; j < count; ++j) w[j] = std::pow(pw.ratio, static_cast<double>(count - 1 - j));
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      for (auto& v : w) v /= total;
      return w;
    }
    case PeriodWeighting::Scheme::Explicit: {
      if (pw.weights.size() != count)
        throw Error("expected " + std::to_string(count) + " period weights, got " + std::to_string(pw.weights.size()));
      double total = 0;
      for (double v : pw.weights) {
        if (!(v > 0)) throw Error("period weights must be strictly positive");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-12) throw Error("period weights must sum to 1");
      return pw.weights;
    }
  }
  return w;
}

// Restrictions on W_1 (intercept) .. W_K, indexed 1-based as in the model
//   H_{1,t} = W_1 + sum_{k>=2} W_k H_{k,t}.
struct Constraints {
  std::map<int, double> fixed;
  bool zero_intercept = false;
  bool nonnegative = false;  // W_2..W_K >= 0
  bool sum_to_one = false;   // W_2 + ... + W_K = 1
  bool has_inequality() const { return nonnegative; }
};

struct EstimationWindow {
  std::optional<int> first_pre;  // default 2 (hazard methods) / 1 (standard DiD)
  std::optional<int> horizon;    // default T
};

struct CovariateAdjustment {
  enum class Kind { Off, Discrete, Propensity };
  Kind kind = Kind::Off;
  std::string covariate;              // Discrete
  std::vector<std::string> features;  // Propensity
  int degree = 1;
};

struct EstimatorConfig {
  Method method = Method::HazardDid;
  PeriodWeighting alpha;
  PeriodWeighting gamma;
  Constraints constraints;
  EstimationWindow window;
  CovariateAdjustment adjust;
};

struct EffectEstimates {
  Method method = Method::HazardDid;
  std::vector<double> coefficients;  // c, or W_1..W_K for linear restrictions
  std::vector<int> periods;          // t* .. horizon
  std::vector<double> ybar_treated;
  std::vector<double> ybar_control;
  std::vector<double> counterfactual;
  std::vector<double> effect;
  std::vector<double> imputed_hazard;  // hazard methods: a_t used for imputation
  double dropped_overlap = 0;
  bool inequality_active = false;
  std::vector<std::string> warnings;
};

// Everything the point estimators consume: group means, the hazard series
// (group 2 optionally covariate-weighted) and t*. Built from a panel or
// directly from population means.
struct EstimationInputs {
  GroupMeanSeries means;
  HazardSeries hazards;
  int t_star = 0;
  double dropped_overlap = 0;
  double max_weight = 0;
  std::vector<std::string> warnings;
};

inline EstimationInputs inputs_from_means(GroupMeanSeries means, int t_star,
                                          const std::optional<std::vector<double>>& weighted_survival = std::nullopt) {
  EstimationInputs in;
  in.hazards = HazardSeries::from_means(means, weighted_survival);
  in.means = std::move(means);
  in.t_star = t_star;
  return in;
}

inline constexpr double kWeightCeiling = 50.0;

// Computes group means and hazards for a (possibly resampled) panel, fitting
// the covariate weights on that same sample. Discrete adjustment drops treated
// individuals without untreated overlap and refits on the remainder, so the
// estimand is the effect on the overlap population.
inline EstimationInputs prepare_inputs(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  using Kind = CovariateAdjustment::Kind;
  if (cfg.adjust.kind == Kind::Off) return inputs_from_means(group_means(p, mult), p.t_star());
  if (cfg.method != Method::HazardDid)
    throw Error("covariate adjustment is only available for hazard_did");
  if (p.num_groups() < 2) throw Error("need at least two groups");

  std::vector<std::uint32_t> kept;
  Multiplicity use = mult;
  WeightFunction w;
  double dropped = 0;
  if (cfg.adjust.kind == Kind::Discrete) {
    w = estimate_discrete_weights(p, cfg.adjust.covariate, mult);
    if (!w.dropped_individuals.empty()) {
      dropped = w.dropped_count;
      kept.resize(p.individuals());
      for (std::size_t i = 0; i < p.individuals(); ++i) kept[i] = multiplicity_of(mult, i);
      for (auto i : w.dropped_individuals) kept[i] = 0;
      use = kept;
      w = estimate_discrete_weights(p, cfg.adjust.covariate, use);
    }
  } else {
    PropensityOptions opt;
    opt.degree = cfg.adjust.degree;
    w = propensity_weights(fit_propensity(p, cfg.adjust.features, opt, mult), p, mult);
  }
  auto surv = weighted_control_survival(p, w, use);
  EstimationInputs in = inputs_from_means(group_means(p, use), p.t_star(), surv);
  in.dropped_overlap = dropped;
  for (std::size_t i = 0; i < p.individuals(); ++i)
    if (multiplicity_of(use, i) > 0 && p.group(i) == 2 && p.outcome(i, 1) == 0)
      if (auto v = w(p, i)) in.max_weight = std::max(in.max_weight, *v);
  if (dropped > 0)
    in.warnings.push_back(std::to_string(static_cast<long long>(dropped)) +
                          " treated individuals dropped for lack of covariate overlap");
  if (in.max_weight > kWeightCeiling)
    in.warnings.push_back("maximum balancing weight exceeds " + std::to_string(static_cast<int>(kWeightCeiling)));
  return in;
}

namespace detail {

struct Window {
  int first_pre;
  int last_pre;
  int horizon;
};

inline Window hazard_window(const EstimationInputs& in, const EstimatorConfig& cfg) {
  const int T = in.means.periods;
  if (in.t_star < 3) throw Error("no pre-treatment hazard periods");
  Window w{cfg.window.first_pre.value_or(2), in.t_star - 1, cfg.window.horizon.value_or(T)};
  if (w.first_pre < 2 || w.first_pre > w.last_pre)
    throw Error("estimation window must start in 2.." + std::to_string(w.last_pre));
  if (w.horizon < in.t_star || w.horizon > T)
    throw Error("horizon must lie in " + std::to_string(in.t_star) + ".." + std::to_string(T));
  return w;
}

inline void require_groups(const EstimationInputs& in, int needed, EffectEstimates& out) {
  const int K = in.means.groups();
  if (K < needed) throw Error("need at least " + std::to_string(needed) + " groups");
  if (K > needed)
    out.warnings.push_back("groups " + std::to_string(needed + 1) + ".." + std::to_string(K) +
                           " ignored by " + to_string(out.method));
}

// Fills periods, means, counterfactuals and effects from imputed hazards a_t.
template <typename ImputedHazard>
void impute_from_hazard(const EstimationInputs& in, const Window& w, ImputedHazard&& hazard_at,
                        EffectEstimates& out) {
  const double y11 = in.means.mean(1, 1);
  bool negative = false;
  for (int t = in.t_star; t <= w.horizon; ++t) {
    const double a = hazard_at(t);
    negative = negative || a < 0;
    const double cf = invert_hazard_to_mean(y11, a, t);
    const double y1t = in.means.mean(1, t);
    out.periods.push_back(t);
    out.ybar_treated.push_back(y1t);
    out.ybar_control.push_back(in.means.mean(2, t));
    out.imputed_hazard.push_back(a);
    out.counterfactual.push_back(cf);
    out.effect.push_back(y1t - cf);
  }
  if (negative)
    out.warnings.push_back("negative imputed hazard: counterfactual mean below initial share");
}

inline EffectEstimates start(Method m, const EstimationInputs& in) {
  EffectEstimates out;
  out.method = m;
  out.dropped_overlap = in.dropped_overlap;
  out.warnings = in.warnings;
  return out;
}

}  // namespace detail

// c = sum_t alpha_t (H_{1,t} - H_{2,t}); counterfactual hazard c + H_{2,t}.
inline EffectEstimates hazard_did(const EstimationInputs& in, const EstimatorConfig& cfg) {
  auto out = detail::start(Method::HazardDid, in);
  detail::require_groups(in, 2, out);
  const auto w = detail::hazard_window(in, cfg);
  const auto alpha = resolve_period_weights(cfg.alpha, w.first_pre, w.last_pre);
  double c = 0;
  for (int t = w.first_pre; t <= w.last_pre; ++t)
    c += alpha[static_cast<std::size_t>(t - w.first_pre)] * (in.hazards.at(1, t) - in.hazards.at(2, t));
  out.coefficients = {c};
  detail::impute_from_hazard(in, w, [&](int t) { return c + in.hazards.at(2, t); }, out);
  return out;
}

// Zero-intercept weighted LS slope of H_1 on H_2:
//   c = sum alpha H_1 H_2 / sum alpha H_2^2; counterfactual hazard c H_{2,t}.
inline EffectEstimates prop_hazard_did(const EstimationInputs& in, const EstimatorConfig& cfg) {
  auto out = detail::start(Method::PropHazard, in);
  detail::require_groups(in, 2, out);
  const auto w = detail::hazard_window(in, cfg);
  const auto alpha = resolve_period_weights(cfg.alpha, w.first_pre, w.last_pre);
  double num = 0, den = 0;
  for (int t = w.first_pre; t <= w.last_pre; ++t) {
    const double a = alpha[static_cast<std::size_t>(t - w.first_pre)];
    const double h2 = in.hazards.at(2, t);
    num += a * in.hazards.at(1, t) * h2;
    den += a * h2 * h2;
  }
  if (!(den > 0)) throw Error("ratio not identified");
  const double c = num / den;
  out.coefficients = {c};
  detail::impute_from_hazard(in, w, [&](int t) { return c * in.hazards.at(2, t); }, out);
  return out;
}

struct LinearFit {
  std::vector<double> coefficients;  // W_1..W_K
  bool inequality_active = false;
  double objective = 0;
};

// Weighted (constrained) least squares of H_{1,t} on an intercept and
// H_{2,t}..H_{K,t} over the pre-treatment window.
inline LinearFit fit_linear_restriction(const EstimationInputs& in, const EstimatorConfig& cfg) {
  const int K = in.means.groups();
  if (K < 2) throw Error("need at least two groups");
  const auto w = detail::hazard_window(in, cfg);
  const auto alpha = resolve_period_weights(cfg.alpha, w.first_pre, w.last_pre);
  const int rows = w.last_pre - w.first_pre + 1;

  const auto& cons = cfg.constraints;
  LsqConstraints lc;
  for (const auto& [k, v] : cons.fixed) {
    if (k < 1 || k > K) throw Error("constraint on W" + std::to_string(k) + " but K=" + std::to_string(K));
    lc.fixed[k - 1] = v;
  }
  if (cons.zero_intercept) {
    auto it = lc.fixed.find(0);
    if (it != lc.fixed.end() && it->second != 0.0) throw Error("empty feasible set");
    lc.fixed[0] = 0.0;
  }
  for (int k = 2; k <= K; ++k) {
    if (cons.nonnegative) lc.nonnegative.insert(k - 1);
    if (cons.sum_to_one) lc.sum_to_one.insert(k - 1);
  }
  const int free_count = K - static_cast<int>(lc.fixed.size()) - (cons.sum_to_one ? 1 : 0);
  if (free_count > rows) throw Error("coefficients not identified");

  Eigen::MatrixXd A(rows, K);
  Eigen::VectorXd b(rows), wt(rows);
  for (int t = w.first_pre; t <= w.last_pre; ++t) {
    const int r = t - w.first_pre;
    A(r, 0) = 1.0;
    for (int k = 2; k <= K; ++k) A(r, k - 1) = in.hazards.at(k, t);
    b(r) = in.hazards.at(1, t);
    wt(r) = alpha[static_cast<std::size_t>(r)];
  }
  const auto sol = constrained_lsq(A, b, wt, lc);
  LinearFit fit;
  fit.coefficients.assign(sol.x.data(), sol.x.data() + sol.x.size());
  fit.inequality_active = !sol.active.empty();
  fit.objective = sol.objective;
  return fit;
}

// Counterfactual hazard W_1 + sum_{k>=2} W_k H_{k,t}.
inline EffectEstimates linear_restriction_effects(const EstimationInputs& in, const LinearFit& fit,
                                                  const EstimatorConfig& cfg) {
  auto out = detail::start(Method::LinearRestriction, in);
  const int K = in.means.groups();
  if (static_cast<int>(fit.coefficients.size()) != K) throw Error("coefficient count does not match groups");
  for (double v : fit.coefficients)
    if (!std::isfinite(v)) throw Error("non-finite coefficient");
  const auto w = detail::hazard_window(in, cfg);
  out.coefficients = fit.coefficients;
  out.inequality_active = fit.inequality_active;
  if (fit.inequality_active) out.warnings.push_back("inequality constraint active at the solution");
  detail::impute_from_hazard(
      in, w,
      [&](int t) {
        double a = fit.coefficients[0];
        for (int k = 2; k <= K; ++k)
          if (fit.coefficients[static_cast<std::size_t>(k - 1)] != 0.0)
            a += fit.coefficients[static_cast<std::size_t>(k - 1)] * in.hazards.at(k, t);
        return a;
      },
      out);
  return out;
}

inline EffectEstimates linear_restriction(const EstimationInputs& in, const EstimatorConfig& cfg) {
  return linear_restriction_effects(in, fit_linear_restriction(in, cfg), cfg);
}

// Mean-outcome DiD: c = sum_s gamma_s (Ybar_{1,s} - Ybar_{2,s}) over s < t*,
// tau_t = (Ybar_{1,t} - Ybar_{2,t}) - c.
inline EffectEstimates standard_did(const EstimationInputs& in, const EstimatorConfig& cfg) {
  auto out = detail::start(Method::StandardDid, in);
  detail::require_groups(in, 2, out);
  const int T = in.means.periods;
  if (in.t_star < 2) throw Error("treatment period must exceed 1");
  const int first = cfg.window.first_pre.value_or(1);
  const int last = in.t_star - 1;
  const int horizon = cfg.window.horizon.value_or(T);
  if (first < 1 || first > last) throw Error("estimation window must start in 1.." + std::to_string(last));
  if (horizon < in.t_star || horizon > T)
    throw Error("horizon must lie in " + std::to_string(in.t_star) + ".." + std::to_string(T));
  const auto gamma = resolve_period_weights(cfg.gamma, first, last);
  double c = 0;
  for (int s = first; s <= last; ++s)
    c += gamma[static_cast<std::size_t>(s - first)] * (in.means.mean(1, s) - in.means.mean(2, s));
  out.coefficients = {c};
  for (int t = in.t_star; t <= horizon; ++t) {
    const double y1 = in.means.mean(1, t), y2 = in.means.mean(2, t);
    const double tau = (y1 - y2) - c;
    out.periods.push_back(t);
    out.ybar_treated.push_back(y1);
    out.ybar_control.push_back(y2);
    out.counterfactual.push_back(y1 - tau);
    out.effect.push_back(tau);
  }
  return out;
}

inline EffectEstimates estimate(const EstimationInputs& in, const EstimatorConfig& cfg) {
  switch (cfg.method) {
    case Method::HazardDid: return hazard_did(in, cfg);
    case Method::PropHazard: return prop_hazard_did(in, cfg);
    case Method::LinearRestriction: return linear_restriction(in, cfg);
    case Method::StandardDid: return standard_did(in, cfg);
  }
  throw Error("unknown method");
}

// Panel-level entry points. `mult` carries bootstrap multiplicities.
inline EffectEstimates estimate(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return estimate(prepare_inputs(p, cfg, mult), cfg);
}

inline EffectEstimates hazard_did(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return hazard_did(prepare_inputs(p, cfg, mult), cfg);
}

inline EffectEstimates prop_hazard_did(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return prop_hazard_did(prepare_inputs(p, cfg, mult), cfg);
}

inline LinearFit fit_linear_restriction(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return fit_linear_restriction(prepare_inputs(p, cfg, mult), cfg);
}

inline EffectEstimates linear_restriction_effects(const ValidatedPanel& p, const LinearFit& fit,
                                                  const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return linear_restriction_effects(prepare_inputs(p, cfg, mult), fit, cfg);
}

inline EffectEstimates standard_did(const ValidatedPanel& p, const EstimatorConfig& cfg, Multiplicity mult = {}) {
  return standard_did(prepare_inputs(p, cfg, mult), cfg);
}

}  // namespace hazdid
