#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hazdid/error.hpp"
#include "hazdid/estimators.hpp"
#include "hazdid/inference.hpp"
#include "hazdid/simulate.hpp"
#include "hazdid/svg.hpp"
#include "hazdid/weighting.hpp"

// CSV, JSON and SVG renderings of results. Every writer is a pure function of
// its input so repeated runs produce identical bytes.
namespace hazdid::report {

using json = nlohmann::ordered_json;

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string effects_csv(const EffectEstimates& e) {
  std::ostringstream o;
  o << "period,ybar_treated,ybar_control,counterfactual,effect\n";
  for (std::size_t j = 0; j < e.periods.size(); ++j)
    o << e.periods[j] << ',' << num(e.ybar_treated[j]) << ',' << num(e.ybar_control[j]) << ','
      << num(e.counterfactual[j]) << ',' << num(e.effect[j]) << '\n';
  return o.str();
}

inline std::string bands_csv(const InferenceResult& r) {
  std::ostringstream o;
  o << "period,effect,se,pointwise_lo,pointwise_hi,uniform_lo,uniform_hi\n";
  for (std::size_t j = 0; j < r.periods.size(); ++j)
    o << r.periods[j] << ',' << num(r.effect[j]) << ',' << num(r.se[j]) << ',' << num(r.pointwise_lo[j]) << ','
      << num(r.pointwise_hi[j]) << ',' << num(r.uniform_lo[j]) << ',' << num(r.uniform_hi[j]) << '\n';
  return o.str();
}

// group,period,hazard,weighted for every defined cell.
inline std::string hazards_csv(const HazardSeries& h) {
  std::ostringstream o;
  o << "group,period,hazard,weighted\n";
  for (int k = 1; k <= h.groups(); ++k)
    for (int t = 2; t <= h.periods(); ++t)
      if (h.defined(k, t))
        o << k << ',' << t << ',' << num(h.at(k, t)) << ',' << (k == 2 && h.weighted() ? 1 : 0) << '\n';
  return o.str();
}

inline std::string weights_csv(const DiscreteWeightTable& w) {
  std::ostringstream o;
  o << "x,weight,count_treated,count_untreated,dropped\n";
  for (std::size_t j = 0; j < w.levels.size(); ++j)
    o << w.levels[j] << ',' << num(w.weight[j]) << ',' << num(w.count_treated[j]) << ','
      << num(w.count_untreated[j]) << ',' << (w.dropped[j] ? 1 : 0) << '\n';
  return o.str();
}

inline std::string delta_csv(const SpecTestResult& r) {
  std::ostringstream o;
  o << "period,delta,lo,hi\n";
  for (std::size_t j = 0; j < r.periods.size(); ++j)
    o << r.periods[j] << ',' << num(r.delta[j]) << ',' << num(r.lo[j]) << ',' << num(r.hi[j]) << '\n';
  return o.str();
}

inline json to_json(const EffectEstimates& e) {
  json j;
  j["method"] = to_string(e.method);
  j["coefficients"] = e.coefficients;
  j["dropped_overlap"] = e.dropped_overlap;
  j["inequality_active"] = e.inequality_active;
  json rows = json::array();
  for (std::size_t t = 0; t < e.periods.size(); ++t) {
    json r;
    r["period"] = e.periods[t];
    r["ybar_treated"] = e.ybar_treated[t];
    r["ybar_control"] = e.ybar_control[t];
    r["counterfactual"] = e.counterfactual[t];
    r["effect"] = e.effect[t];
    if (t < e.imputed_hazard.size()) r["imputed_hazard"] = e.imputed_hazard[t];
    rows.push_back(std::move(r));
  }
  j["effects"] = std::move(rows);
  j["warnings"] = e.warnings;
  return j;
}

inline json to_json(const InferenceResult& r) {
  json j;
  j["replicates"] = r.replicates;
  j["failed_replicates"] = r.failed;
  j["seed"] = r.seed;
  j["level"] = r.level;
  j["uniform_critical_value"] = r.uniform_q;
  json rows = json::array();
  for (std::size_t t = 0; t < r.periods.size(); ++t)
    rows.push_back({{"period", r.periods[t]},
                    {"effect", r.effect[t]},
                    {"se", r.se[t]},
                    {"pointwise_critical_value", r.pointwise_q[t]},
                    {"pointwise", {r.pointwise_lo[t], r.pointwise_hi[t]}},
                    {"uniform", {r.uniform_lo[t], r.uniform_hi[t]}}});
  j["bands"] = std::move(rows);
  j["warnings"] = r.warnings;
  return j;
}

inline json to_json(const SpecTestResult& r) {
  json j;
  j["mode"] = to_string(r.mode);
  j["reject"] = r.reject;
  j["level"] = r.level;
  j["critical_value"] = r.critical_value;
  j["replicates"] = r.replicates;
  j["failed_replicates"] = r.failed;
  j["seed"] = r.seed;
  j["dropped_overlap"] = r.dropped_overlap;
  json rows = json::array();
  for (std::size_t t = 0; t < r.periods.size(); ++t)
    rows.push_back({{"period", r.periods[t]}, {"delta", r.delta[t]}, {"se", r.se[t]}, {"lo", r.lo[t]}, {"hi", r.hi[t]}});
  j["deltas"] = std::move(rows);
  j["warnings"] = r.warnings;
  return j;
}

inline const char* kMetricsHeader =
    "estimator,n,reps,B,seed,abs_bias,mean_abs_error,mse,uniform_coverage,pointwise_coverage,pt_rejection,completed,failed\n";

inline std::string metrics_csv(const MetricsTable& m) {
  std::ostringstream o;
  o << kMetricsHeader;
  for (const auto& r : m.rows)
    o << to_string(r.method) << ',' << m.params.n << ',' << m.options.reps << ',' << m.options.bootstrap << ','
      << m.options.seed << ',' << num(r.abs_bias) << ',' << num(r.mean_abs_error) << ',' << num(r.mse) << ','
      << num(r.uniform_coverage) << ',' << num(r.pointwise_coverage) << ',' << num(r.pt_rejection) << ','
      << r.completed << ',' << r.failed << '\n';
  return o.str();
}

// Aligned text table laid out like the published simulation table.
inline std::string metrics_text(const MetricsTable& m) {
  std::ostringstream o;
  o << "Simulation performance: n=" << m.params.n << " (" << m.params.n / 2 << " per group), reps=" << m.options.reps
    << ", B=" << m.options.bootstrap << ", seed=" << m.options.seed << ", level=" << m.options.level << "\n\n";
  o << std::left << std::setw(14) << "estimator" << std::right << std::setw(12) << "abs bias" << std::setw(12)
    << "MSE" << std::setw(12) << "unif cov" << std::setw(12) << "pw cov" << std::setw(12) << "PT reject"
    << std::setw(8) << "failed" << '\n';
  o << std::string(82, '-') << '\n';
  o << std::fixed;
  for (const auto& r : m.rows)
    o << std::left << std::setw(14) << to_string(r.method) << std::right << std::setprecision(5) << std::setw(12)
      << r.abs_bias << std::setw(12) << r.mse << std::setprecision(3) << std::setw(12) << r.uniform_coverage
      << std::setw(12) << r.pointwise_coverage << std::setw(12) << r.pt_rejection << std::setw(8) << r.failed
      << '\n';
  return o.str();
}

inline std::string replicates_csv(const MetricsTable& m) {
  std::ostringstream o;
  o << "rep,estimator,ok,uniform_covered,pointwise_covered,pt_reject,bootstrap_failed";
  for (int t : m.periods) o << ",effect_" << t;
  o << '\n';
  for (const auto& r : m.replicates) {
    o << r.rep << ',' << to_string(r.method) << ',' << (r.ok ? 1 : 0) << ',' << (r.uniform_covered ? 1 : 0) << ','
      << r.pointwise_covered << ',' << (r.pt_reject ? 1 : 0) << ',' << r.bootstrap_failed;
    for (std::size_t t = 0; t < m.periods.size(); ++t) o << ',' << (t < r.effect.size() ? num(r.effect[t]) : "");
    o << '\n';
  }
  return o.str();
}

inline json to_json(const MetricsTable& m) {
  json j;
  j["n"] = m.params.n;
  j["reps"] = m.options.reps;
  j["B"] = m.options.bootstrap;
  j["seed"] = m.options.seed;
  j["true_effect"] = m.true_effect;
  json rows = json::array();
  for (const auto& r : m.rows)
    rows.push_back({{"estimator", to_string(r.method)},
                    {"abs_bias", r.abs_bias},
                    {"mean_abs_error", r.mean_abs_error},
                    {"mse", r.mse},
                    {"uniform_coverage", r.uniform_coverage},
                    {"pointwise_coverage", r.pointwise_coverage},
                    {"pt_rejection", r.pt_rejection},
                    {"completed", r.completed},
                    {"failed", r.failed}});
  j["rows"] = std::move(rows);
  return j;
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

inline constexpr const char* kTreatedColor = "#1f4fb4";
inline constexpr const char* kControlColor = "#c0392b";

// Time-average hazards by group with the imputed treated counterfactual dashed.
inline std::string hazard_chart(const EstimationInputs& in, const EffectEstimates& e) {
  svg::Chart c;
  c.title = "Time-average hazards";
  c.x_label = "period";
  c.y_label = "time-average hazard";
  c.marker_x = in.t_star;
  const char* palette[] = {kTreatedColor, kControlColor, "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};
  for (int k = 1; k <= in.hazards.groups(); ++k) {
    svg::Line l;
    l.label = "group " + std::to_string(k) + (k == 2 && in.hazards.weighted() ? " (weighted)" : "");
    l.color = palette[(k - 1) % 6];
    for (int t = 2; t <= in.hazards.periods(); ++t)
      if (in.hazards.defined(k, t)) {
        l.x.push_back(t);
        l.y.push_back(in.hazards.at(k, t));
      }
    c.lines.push_back(std::move(l));
  }
  if (!e.imputed_hazard.empty()) {
    svg::Line cf;
    cf.label = "group 1 counterfactual";
    cf.color = kTreatedColor;
    cf.dashed = true;
    for (std::size_t j = 0; j < e.periods.size(); ++j) {
      cf.x.push_back(e.periods[j]);
      cf.y.push_back(e.imputed_hazard[j]);
    }
    c.lines.push_back(std::move(cf));
  }
  return c.render();
}

// Group means with the imputed counterfactual and its uniform band.
inline std::string means_chart(const EstimationInputs& in, const EffectEstimates& e, const InferenceResult* inf) {
  svg::Chart c;
  c.title = "Mean outcomes";
  c.x_label = "period";
  c.y_label = "share absorbed";
  c.marker_x = in.t_star;
  for (int k = 1; k <= std::min(2, in.means.groups()); ++k) {
    svg::Line l;
    l.label = "group " + std::to_string(k);
    l.color = k == 1 ? kTreatedColor : kControlColor;
    for (int t = 1; t <= in.means.periods; ++t) {
      l.x.push_back(t);
      l.y.push_back(in.means.mean(k, t));
    }
    c.lines.push_back(std::move(l));
  }
  svg::Line cf;
  cf.label = "group 1 counterfactual";
  cf.color = kTreatedColor;
  cf.dashed = true;
  for (std::size_t j = 0; j < e.periods.size(); ++j) {
    cf.x.push_back(e.periods[j]);
    cf.y.push_back(e.counterfactual[j]);
  }
  c.lines.push_back(std::move(cf));
  if (inf) {
    svg::Band b;
    b.color = kTreatedColor;
    for (std::size_t j = 0; j < inf->periods.size(); ++j) {
      b.x.push_back(inf->periods[j]);
      b.lo.push_back(e.ybar_treated[j] - inf->uniform_hi[j]);
      b.hi.push_back(e.ybar_treated[j] - inf->uniform_lo[j]);
    }
    c.bands.push_back(std::move(b));
  }
  return c.render();
}

inline std::string effects_chart(const InferenceResult& r) {
  svg::Chart c;
  c.title = "Treatment effects with uniform band";
  c.x_label = "period";
  c.y_label = "effect";
  c.zero_line = 0.0;
  svg::Band b;
  b.x.assign(r.periods.begin(), r.periods.end());
  b.lo = r.uniform_lo;
  b.hi = r.uniform_hi;
  c.bands.push_back(std::move(b));
  svg::Line l;
  l.label = "estimate";
  l.x.assign(r.periods.begin(), r.periods.end());
  l.y = r.effect;
  l.markers = true;
  c.lines.push_back(std::move(l));
  return c.render();
}

inline std::string delta_chart(const SpecTestResult& r) {
  svg::Chart c;
  c.title = std::string("Pre-treatment ") + (r.mode == TestMode::Hazard ? "hazard" : "mean") + " differences";
  c.x_label = "period";
  c.y_label = "delta";
  c.zero_line = 0.0;
  svg::Band b;
  b.x.assign(r.periods.begin(), r.periods.end());
  b.lo = r.lo;
  b.hi = r.hi;
  c.bands.push_back(std::move(b));
  svg::Line l;
  l.label = "delta";
  l.x.assign(r.periods.begin(), r.periods.end());
  l.y = r.delta;
  l.markers = true;
  c.lines.push_back(std::move(l));
  return c.render();
}

}  // namespace hazdid::report
