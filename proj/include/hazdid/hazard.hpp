#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hazdid/error.hpp"
#include "hazdid/panel.hpp"
#include "hazdid/weighting.hpp"

namespace hazdid {

// Time-average hazard from two survivor shares:
//   H = ln((1 - y1) / (1 - yt)) / (t - 1).
inline double time_average_hazard(double y1, double yt, int t) {
  if (t < 2) throw Error("hazard undefined at initial period");
  if (yt >= 1.0)
    throw Error("survivor share zero: hazard undefined at t=" + std::to_string(t));
  if (y1 >= 1.0) throw Error("survivor share zero: hazard undefined at t=1");
  return std::log((1.0 - y1) / (1.0 - yt)) / (t - 1);
}

inline double time_average_hazard(const GroupMeanSeries& means, int k, int t) {
  return time_average_hazard(means.mean(k, 1), means.mean(k, t), t);
}

// Counterfactual mean 1 - (1 - y11) exp(-(t - 1) a). Negative a is passed
// through, giving values below y11.
inline double invert_hazard_to_mean(double y11, double a, int t) {
  return 1.0 - (1.0 - y11) * std::exp(-(t - 1) * a);
}

// Weighted untreated survivor share (1/n_2) sum_{G=2} omega(X_i)(1 - Y_{i,t})
// for t = 1..T (index t-1). Only period-1 survivors carry weight.
inline std::vector<double> weighted_control_survival(const ValidatedPanel& p, const WeightFunction& w,
                                                     Multiplicity mult = {}) {
  const int T = p.periods();
  // mass absorbed at each period, plus never-absorbed mass at index T+1
  std::vector<double> by_absorption(static_cast<std::size_t>(T + 2), 0.0);
  double n2 = 0;
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const auto m = multiplicity_of(mult, i);
    if (m == 0 || p.group(i) != 2) continue;
    n2 += m;
    if (p.absorption(i) == 1) continue;
    const auto weight = w(p, i);
    if (!weight) throw Error("support violation: no weight for untreated individual " + p.data().ids[i]);
    by_absorption[static_cast<std::size_t>(p.absorption(i))] += m * *weight;
  }
  if (n2 == 0) throw Error("group 2 is empty in sample");
  std::vector<double> out(static_cast<std::size_t>(T));
  double surviving = 0;
  for (int a = 2; a <= T + 1; ++a) surviving += by_absorption[static_cast<std::size_t>(a)];
  for (int t = 1; t <= T; ++t) {
    if (t >= 2) surviving -= by_absorption[static_cast<std::size_t>(t)];
    out[static_cast<std::size_t>(t - 1)] = surviving / n2;
  }
  return out;
}

// ln((1 - y21) / weighted survivor share) / (t - 1).
inline double weighted_hazard_from_survival(double y21, double weighted_survival, int t) {
  if (t < 2) throw Error("hazard undefined at initial period");
  if (!(weighted_survival > 0)) throw Error("weighted survivor share nonpositive");
  if (y21 >= 1.0) throw Error("survivor share zero: hazard undefined at t=1");
  return std::log((1.0 - y21) / weighted_survival) / (t - 1);
}

inline double weighted_time_average_hazard(const ValidatedPanel& p, const WeightFunction& w, int t,
                                           Multiplicity mult = {}) {
  if (t < 2) throw Error("hazard undefined at initial period");
  const auto surv = weighted_control_survival(p, w, mult);
  const auto means = group_means(p, mult);
  return weighted_hazard_from_survival(means.mean(2, 1), surv[static_cast<std::size_t>(t - 1)], t);
}

// Estimated time-average hazards H_{k,t} for every group and t = 2..T,
// computed eagerly. Cells where the hazard is undefined hold NaN together with
// the reason; at() rethrows it.
class HazardSeries {
 public:
  HazardSeries() = default;

  // Group 2 uses the weighted survivor series when one is supplied.
  static HazardSeries from_means(const GroupMeanSeries& means,
                                 const std::optional<std::vector<double>>& weighted_survival = std::nullopt) {
    HazardSeries h;
    h.periods_ = means.periods;
    h.weighted_ = weighted_survival.has_value();
    const int K = means.groups();
    h.values_.assign(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(std::max(means.periods - 1, 0))));
    h.reasons_.assign(static_cast<std::size_t>(K), std::vector<std::string>(h.values_.front().size()));
    for (int k = 1; k <= K; ++k)
      for (int t = 2; t <= means.periods; ++t) {
        auto& cell = h.values_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 2)];
        try {
          cell = (k == 2 && weighted_survival)
                     ? weighted_hazard_from_survival(means.mean(2, 1),
                                                     (*weighted_survival)[static_cast<std::size_t>(t - 1)], t)
                     : time_average_hazard(means, k, t);
        } catch (const Error& e) {
          cell = std::numeric_limits<double>::quiet_NaN();
          h.reasons_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 2)] =
              "group " + std::to_string(k) + ": " + e.what();
        }
      }
    return h;
  }

  int periods() const { return periods_; }
  int groups() const { return static_cast<int>(values_.size()); }
  bool weighted() const { return weighted_; }

  bool defined(int k, int t) const {
    return t >= 2 && t <= periods_ && !std::isnan(values_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 2)]);
  }

  double at(int k, int t) const {
    if (t < 2) throw Error("hazard undefined at initial period");
    if (t > periods_) throw Error("period " + std::to_string(t) + " beyond panel");
    const double v = values_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 2)];
    if (std::isnan(v)) throw Error(reasons_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 2)]);
    return v;
  }

  // Last period through which every group's hazard is defined (>= 1).
  int last_defined_period() const {
    int last = 1;
    for (int t = 2; t <= periods_; ++t) {
      for (int k = 1; k <= groups(); ++k)
        if (!defined(k, t)) return last;
      last = t;
    }
    return last;
  }

 private:
  int periods_ = 0;
  bool weighted_ = false;
  std::vector<std::vector<double>> values_;  // [k-1][t-2]
  std::vector<std::vector<std::string>> reasons_;
};

}  // namespace hazdid
