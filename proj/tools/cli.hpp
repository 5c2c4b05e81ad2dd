#pragma once

// Command-line front end: validate / estimate / spectest / simulate.
// run() is separate from main() so the test suite can drive it in-process.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hazdid/hazdid.hpp"

namespace hazdid::cli {

namespace fs = std::filesystem;
using report::json;

enum Exit : int { kOk = 0, kFailure = 1, kViolations = 2, kReject = 3 };

struct UsageError : Error {
  using Error::Error;
};

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string outdir = ".";
  std::string format = "long";
  std::optional<int> tstar;

  std::string method = "hazard-did";
  std::string constraints;
  std::string alpha = "equal";
  std::string gamma = "equal";
  std::string window;
  std::string covariate;
  std::string propensity;
  int degree = 1;

  int B = 1000;
  std::optional<std::uint64_t> seed;
  double level = 0.95;
  std::string mode = "hazard";
  bool plots = false;
  bool force_bands = false;
  bool truncate_horizon = false;
  unsigned threads = 0;

  std::string preset = "table1";
  std::size_t n = 1000;
  int reps = 1000;
  int emit_panels = 0;
  bool dump_replicates = false;
};

inline json config_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  if (c.subcommand == "simulate") {
    j["preset"] = c.preset;
    j["n_per_group"] = c.n;
    j["reps"] = c.reps;
    j["B"] = c.B;
    j["seed"] = c.seed.value_or(0);
    j["level"] = c.level;
    j["emit_panels"] = c.emit_panels;
    return j;
  }
  j["input"] = c.input;
  j["format"] = c.format;
  j["tstar"] = c.tstar ? json(*c.tstar) : json(nullptr);
  if (c.subcommand == "validate") return j;
  if (c.subcommand == "estimate") {
    j["method"] = c.method;
    j["constraints"] = c.constraints;
    j["gamma"] = c.gamma;
    j["force_bands"] = c.force_bands;
    j["truncate_horizon"] = c.truncate_horizon;
  } else {
    j["mode"] = c.mode;
  }
  j["alpha"] = c.alpha;
  j["window"] = c.window;
  j["covariate"] = c.covariate;
  j["propensity"] = c.propensity;
  j["degree"] = c.degree;
  j["B"] = c.B;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["level"] = c.level;
  return j;
}

// ---------------------------------------------------------------------------
// Flag parsing
// ---------------------------------------------------------------------------

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, const std::string& what) {
  auto v = detail::parse_double(s);
  if (!v) throw UsageError("invalid " + what + ": '" + s + "'");
  return *v;
}

inline int parse_integer(const std::string& s, const std::string& what) {
  auto v = detail::parse_int(s);
  if (!v) throw UsageError("invalid " + what + ": '" + s + "'");
  return static_cast<int>(*v);
}

inline Method parse_method(const std::string& s) {
  if (s == "hazard-did") return Method::HazardDid;
  if (s == "prop-hazard") return Method::PropHazard;
  if (s == "linear") return Method::LinearRestriction;
  if (s == "standard-did") return Method::StandardDid;
  throw UsageError("unknown method '" + s + "' (hazard-did, prop-hazard, linear, standard-did)");
}

inline PeriodWeighting parse_weighting(const std::string& s, const std::string& flag) {
  PeriodWeighting pw;
  if (s == "equal") return pw;
  if (s.rfind("geometric:", 0) == 0) {
    pw.scheme = PeriodWeighting::Scheme::Geometric;
    pw.ratio = parse_number(s.substr(10), flag + " ratio");
    if (!(pw.ratio > 0)) throw UsageError(flag + " ratio must be positive");
    return pw;
  }
  throw UsageError("invalid " + flag + " '" + s + "' (equal or geometric:r)");
}

// "W2=1,zero-intercept,nonneg,sum-to-one"
inline Constraints parse_constraints(const std::string& s) {
  Constraints c;
  for (const auto& tok : split(s, ',')) {
    if (tok == "zero-intercept") {
      c.zero_intercept = true;
    } else if (tok == "nonneg") {
      c.nonnegative = true;
    } else if (tok == "sum-to-one") {
      c.sum_to_one = true;
    } else if (tok.size() > 1 && tok[0] == 'W' && tok.find('=') != std::string::npos) {
      const auto eq = tok.find('=');
      const int k = parse_integer(tok.substr(1, eq - 1), "constraint index");
      if (k < 1) throw UsageError("constraint index must be >= 1");
      c.fixed[k] = parse_number(tok.substr(eq + 1), "constraint value");
    } else {
      throw UsageError("unknown constraint '" + tok + "'");
    }
  }
  return c;
}

// "a:b", "a:" or ":b" -> first pre-period and horizon.
inline EstimationWindow parse_window(const std::string& s) {
  EstimationWindow w;
  if (s.empty()) return w;
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("window must be a:b");
  const auto a = s.substr(0, colon), b = s.substr(colon + 1);
  if (!a.empty()) w.first_pre = parse_integer(a, "window start");
  if (!b.empty()) w.horizon = parse_integer(b, "window end");
  return w;
}

inline EstimatorConfig estimator_config(const RunConfig& c) {
  EstimatorConfig cfg;
  cfg.method = parse_method(c.method);
  cfg.alpha = parse_weighting(c.alpha, "--alpha");
  cfg.gamma = parse_weighting(c.gamma, "--gamma");
  cfg.constraints = parse_constraints(c.constraints);
  if (!c.constraints.empty() && cfg.method != Method::LinearRestriction)
    throw UsageError("--constraints applies only to --method linear");
  cfg.window = parse_window(c.window);
  if (!c.covariate.empty() && !c.propensity.empty())
    throw UsageError("--covariate and --propensity are mutually exclusive");
  if (!c.covariate.empty()) {
    cfg.adjust.kind = CovariateAdjustment::Kind::Discrete;
    cfg.adjust.covariate = c.covariate;
  } else if (!c.propensity.empty()) {
    cfg.adjust.kind = CovariateAdjustment::Kind::Propensity;
    cfg.adjust.features = split(c.propensity, ',');
    cfg.adjust.degree = c.degree;
  }
  if (cfg.adjust.kind != CovariateAdjustment::Kind::Off && cfg.method != Method::HazardDid)
    throw UsageError("covariate adjustment requires --method hazard-did");
  return cfg;
}

inline BootstrapOptions bootstrap_options(const RunConfig& c) {
  if (!c.seed) throw UsageError("--seed is required when bootstrapping (--B > 0)");
  if (!(c.level > 0 && c.level < 1)) throw UsageError("--level must lie in (0,1)");
  BootstrapOptions o;
  o.replicates = c.B;
  o.seed = *c.seed;
  o.level = c.level;
  o.threads = c.threads;
  o.force = c.force_bands;
  return o;
}

inline PanelDataset load_input(const RunConfig& c) {
  PanelSchema schema;
  if (c.format == "wide")
    schema.layout = CsvLayout::Wide;
  else if (c.format != "long")
    throw UsageError("--format must be long or wide");
  schema.t_star = c.tstar;
  return load_panel_csv(c.input, schema);
}

inline void write_json(const fs::path& path, const json& j) { report::write_file(path, j.dump(2) + "\n"); }

inline void print_warnings(const std::vector<std::string>& w, std::ostream& err) {
  for (const auto& s : w) err << "warning: " << s << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_validate(const RunConfig& c, std::ostream& out) {
  const auto result = validate_panel(load_input(c));
  if (result.report.ok()) {
    const auto& p = *result.panel;
    out << "valid: " << p.individuals() << " individuals, " << p.periods() << " periods, " << p.num_groups()
        << " groups, t*=" << p.t_star() << '\n';
    return kOk;
  }
  out << "invalid: " << result.report.violations.size() << " violation(s)\n";
  for (const auto& v : result.report.violations) out << "  " << v.message << '\n';
  return kViolations;
}

inline int cmd_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  auto cfg = estimator_config(c);
  if (c.B < 0) throw UsageError("--B must be >= 0");
  std::optional<BootstrapOptions> bo;
  if (c.B > 0) bo = bootstrap_options(c);
  const auto panel = require_valid(load_input(c));
  const fs::path dir = c.outdir;

  const auto inputs = prepare_inputs(panel, cfg);
  if (c.truncate_horizon && cfg.method != Method::StandardDid) {
    const int last = inputs.hazards.last_defined_period();
    if (last < panel.t_star()) throw Error("no post-treatment period with defined hazards");
    if (!cfg.window.horizon || *cfg.window.horizon > last) {
      if (last < panel.periods()) err << "note: horizon truncated at t=" << last << '\n';
      cfg.window.horizon = last;
    }
  }
  std::optional<InferenceResult> inf;
  EffectEstimates est;
  if (bo) {
    inf = bootstrap_effects(panel, cfg, *bo);
    est = inf->estimates;
  } else {
    est = estimate(inputs, cfg);
  }

  json j;
  j["config"] = config_json(c);
  j["estimates"] = report::to_json(est);
  j["inference"] = inf ? report::to_json(*inf) : json(nullptr);
  write_json(dir / "effects.json", j);
  report::write_file(dir / "effects.csv", report::effects_csv(est));
  report::write_file(dir / "hazards.csv", report::hazards_csv(inputs.hazards));
  if (inf) report::write_file(dir / "bands.csv", report::bands_csv(*inf));
  if (cfg.adjust.kind == CovariateAdjustment::Kind::Discrete) {
    auto w = estimate_discrete_weights(panel, cfg.adjust.covariate);
    if (w.table) report::write_file(dir / "weights.csv", report::weights_csv(*w.table));
  }
  if (c.plots) {
    report::write_file(dir / "plots" / "hazards.svg", report::hazard_chart(inputs, est));
    report::write_file(dir / "plots" / "means.svg", report::means_chart(inputs, est, inf ? &*inf : nullptr));
    if (inf) report::write_file(dir / "plots" / "effects.svg", report::effects_chart(*inf));
  }

  out << "method " << to_string(est.method) << ", coefficients";
  for (double v : est.coefficients) out << ' ' << report::num(v);
  out << '\n';
  if (est.dropped_overlap > 0) out << "dropped for overlap: " << est.dropped_overlap << '\n';
  out << std::left << std::setw(8) << "period" << std::setw(14) << "effect";
  if (inf) out << std::setw(14) << "se" << "uniform band";
  out << '\n';
  for (std::size_t t = 0; t < est.periods.size(); ++t) {
    char line[160];
    if (inf)
      std::snprintf(line, sizeof line, "%-8d%-14.6f%-14.6f[%.6f, %.6f]", est.periods[t], est.effect[t], inf->se[t],
                    inf->uniform_lo[t], inf->uniform_hi[t]);
    else
      std::snprintf(line, sizeof line, "%-8d%-14.6f", est.periods[t], est.effect[t]);
    out << line << '\n';
  }
  print_warnings(inf ? inf->warnings : est.warnings, err);
  return kOk;
}

inline int cmd_spectest(const RunConfig& c, std::ostream& out, std::ostream& err) {
  RunConfig use = c;
  use.method = "hazard-did";
  auto cfg = estimator_config(use);
  TestMode mode;
  if (c.mode == "hazard")
    mode = TestMode::Hazard;
  else if (c.mode == "mean")
    mode = TestMode::Mean;
  else
    throw UsageError("--mode must be hazard or mean");
  if (mode == TestMode::Mean && cfg.adjust.kind != CovariateAdjustment::Kind::Off)
    throw UsageError("covariate adjustment is only available in hazard mode");
  if (c.B < 2) throw UsageError("--B must be >= 2 for the specification test");
  const auto bo = bootstrap_options(c);
  const auto panel = require_valid(load_input(c));
  if (panel.t_star() < 4) throw UsageError("no testable pre-periods: specification test needs t* >= 4");

  const auto r = parallel_trends_test(panel, mode, cfg, bo);
  const fs::path dir = c.outdir;
  json j;
  j["config"] = config_json(c);
  j["result"] = report::to_json(r);
  write_json(dir / "spectest.json", j);
  report::write_file(dir / "delta.csv", report::delta_csv(r));
  if (c.plots) report::write_file(dir / "plot.svg", report::delta_chart(r));

  out << to_string(mode) << " specification test, level " << c.level << ", critical value "
      << report::num(r.critical_value) << '\n';
  out << (r.reject ? "reject" : "fail to reject") << " parallel pre-trends\n";
  print_warnings(r.warnings, err);
  return r.reject ? kReject : kOk;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (!c.seed) throw UsageError("--seed is required for simulation");
  if (c.n < 1) throw UsageError("--n must be >= 1");
  if (c.reps < 0 || c.emit_panels < 0) throw UsageError("--reps and --emit-panels must be >= 0");
  if (c.reps == 0 && c.emit_panels == 0) throw UsageError("nothing to do: --reps and --emit-panels are both 0");
  SimParams p;
  if (c.preset == "table1")
    p = SimParams::table1_row(c.n);
  else if (c.preset == "stratified")
    p = SimParams::stratified(2 * c.n);
  else
    throw UsageError("--preset must be table1 or stratified");
  const fs::path dir = c.outdir;

  // Panel r uses the same seed as Monte Carlo replicate r.
  for (int r = 0; r < c.emit_panels; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "panel_%03d.csv", r + 1);
    const auto panel = simulate_panel(p, derive_seed(*c.seed, streams::kReplicate, static_cast<std::uint64_t>(r)));
    std::ostringstream csv;
    write_panel_csv(panel, csv);
    report::write_file(dir / "panels" / name, csv.str());
  }
  if (c.reps == 0) {
    out << "wrote " << c.emit_panels << " panel(s)\n";
    return kOk;
  }
  if (c.B < 2) throw UsageError("--B must be >= 2 for simulation");
  if (!(c.level > 0 && c.level < 1)) throw UsageError("--level must lie in (0,1)");

  MonteCarloOptions mo;
  mo.reps = c.reps;
  mo.bootstrap = c.B;
  mo.seed = *c.seed;
  mo.level = c.level;
  mo.threads = c.threads;
  mo.keep_replicates = c.dump_replicates;
  const auto table = monte_carlo(p, mo);

  report::write_file(dir / "metrics.csv", report::metrics_csv(table));
  const auto text = report::metrics_text(table);
  report::write_file(dir / "metrics.txt", text);
  json j;
  j["config"] = config_json(c);
  j["metrics"] = report::to_json(table);
  write_json(dir / "metrics.json", j);
  if (c.dump_replicates) report::write_file(dir / "replicates.csv", report::replicates_csv(table));
  out << text;
  for (const auto& row : table.rows)
    if (row.failed > 0) err << "warning: " << row.failed << " " << to_string(row.method) << " replicates failed\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Difference-in-differences for absorbing binary outcomes"};
  app.require_subcommand(1);
  RunConfig c;
  std::uint64_t seed = 0;

  auto input_opts = [&](CLI::App* sub) {
    sub->add_option("--input", c.input, "panel CSV")->required();
    sub->add_option("--tstar", c.tstar, "treatment period (overrides the file header)");
    sub->add_option("--format", c.format, "long or wide")->capture_default_str();
  };
  auto estimator_opts = [&](CLI::App* sub) {
    sub->add_option("--alpha", c.alpha, "pre-period weights: equal or geometric:r")->capture_default_str();
    sub->add_option("--window", c.window, "first pre-period and horizon, a:b");
    sub->add_option("--covariate", c.covariate, "discrete covariate for balancing weights");
    sub->add_option("--propensity", c.propensity, "comma-separated propensity features");
    sub->add_option("--degree", c.degree, "polynomial degree for real propensity features")->capture_default_str();
  };
  auto boot_opts = [&](CLI::App* sub) {
    sub->add_option("--B", c.B, "bootstrap replicates")->capture_default_str();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--level", c.level, "confidence level")->capture_default_str();
    sub->add_option("--threads", c.threads, "worker threads (default HAZDID_THREADS or all cores)");
  };

  auto* validate = app.add_subcommand("validate", "check a panel CSV");
  input_opts(validate);

  auto* est = app.add_subcommand("estimate", "estimate treatment effects");
  input_opts(est);
  estimator_opts(est);
  boot_opts(est);
  est->add_option("--outdir", c.outdir, "output directory")->capture_default_str();
  est->add_option("--method", c.method, "hazard-did, prop-hazard, linear or standard-did")->capture_default_str();
  est->add_option("--constraints", c.constraints, "linear restrictions, e.g. W2=1,zero-intercept,nonneg,sum-to-one");
  est->add_option("--gamma", c.gamma, "standard DiD pre-period weights")->capture_default_str();
  est->add_flag("--plots", c.plots, "write SVG plots");
  est->add_flag("--truncate-horizon", c.truncate_horizon, "stop at the last period with defined hazards");
  est->add_flag("--force-bands", c.force_bands, "report bands even when an inequality constraint binds");

  auto* spec = app.add_subcommand("spectest", "bootstrap test of parallel pre-treatment trends");
  input_opts(spec);
  estimator_opts(spec);
  boot_opts(spec);
  spec->add_option("--outdir", c.outdir, "output directory")->capture_default_str();
  spec->add_option("--mode", c.mode, "hazard or mean")->capture_default_str();
  spec->add_flag("--plots", c.plots, "write SVG plot");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on the reference DGP");
  boot_opts(sim);
  sim->add_option("--outdir", c.outdir, "output directory")->capture_default_str();
  sim->add_option("--preset", c.preset, "table1 or stratified")->capture_default_str();
  sim->add_option("--n", c.n, "individuals per group")->capture_default_str();
  sim->add_option("--reps", c.reps, "Monte Carlo replicates")->capture_default_str();
  sim->add_option("--emit-panels", c.emit_panels, "write the first k simulated panels as CSV");
  sim->add_flag("--dump-replicates", c.dump_replicates, "write per-replicate results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kFailure;
  }
  for (auto* sub : {validate, est, spec, sim})
    if (sub->parsed()) c.subcommand = sub->get_name();
  for (auto* sub : {est, spec, sim})
    if (sub->parsed() && sub->count("--seed") > 0) c.seed = seed;
  if (sim->parsed() && sim->count("--B") == 0) c.B = 500;

  try {
    if (c.subcommand == "validate") return cmd_validate(c, out);
    if (c.subcommand == "estimate") return cmd_estimate(c, out, err);
    if (c.subcommand == "spectest") return cmd_spectest(c, out, err);
    return cmd_simulate(c, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kFailure;
}

}  // namespace hazdid::cli
