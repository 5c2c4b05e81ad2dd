#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hazdid/error.hpp"

namespace hazdid {

enum class CovariateKind { Discrete, Real };

// A time-invariant covariate. Discrete values are stored as indices into a
// sorted level table; real values directly.
struct Covariate {
  std::string name;
  CovariateKind kind = CovariateKind::Discrete;
  std::vector<std::string> levels;  // discrete only, sorted
  std::vector<int> codes;           // discrete only, per individual
  std::vector<double> values;       // real only, per individual
};

// n individuals x T periods of binary outcomes. Periods are 1-based in every
// public accessor; groups are labelled 1..K with group 1 treated.
struct PanelDataset {
  std::size_t individuals = 0;
  int periods = 0;
  int t_star = 0;
  std::vector<std::string> ids;
  std::vector<int> groups;
  std::vector<std::uint8_t> outcomes;  // row-major, individuals x periods
  std::vector<Covariate> covariates;

  int outcome(std::size_t i, int t) const {
    return outcomes[i * static_cast<std::size_t>(periods) + static_cast<std::size_t>(t - 1)];
  }
  void set_outcome(std::size_t i, int t, int y) {
    outcomes[i * static_cast<std::size_t>(periods) + static_cast<std::size_t>(t - 1)] =
        static_cast<std::uint8_t>(y);
  }
  int num_groups() const {
    return groups.empty() ? 0 : *std::max_element(groups.begin(), groups.end());
  }
  const Covariate* covariate(std::string_view name) const {
    for (const auto& c : covariates)
      if (c.name == name) return &c;
    return nullptr;
  }
  const Covariate& require_covariate(std::string_view name) const {
    if (const auto* c = covariate(name)) return *c;
    throw Error("unknown covariate '" + std::string(name) + "'");
  }

  friend bool operator==(const PanelDataset& a, const PanelDataset& b) {
    if (a.individuals != b.individuals || a.periods != b.periods || a.t_star != b.t_star ||
        a.ids != b.ids || a.groups != b.groups || a.outcomes != b.outcomes ||
        a.covariates.size() != b.covariates.size())
      return false;
    for (std::size_t j = 0; j < a.covariates.size(); ++j) {
      const auto& x = a.covariates[j];
      const auto& y = b.covariates[j];
      if (x.name != y.name || x.kind != y.kind || x.levels != y.levels || x.codes != y.codes ||
          x.values != y.values)
        return false;
    }
    return true;
  }
};

struct Violation {
  enum class Kind { NotAbsorbing, EmptyGroup, TreatmentPeriod };
  Kind kind;
  std::size_t individual = 0;  // NotAbsorbing only (0-based row)
  int period = 0;              // NotAbsorbing: last period with outcome 1
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Frequency weights over individuals (bootstrap multiplicities). Empty means
// every individual counts once.
using Multiplicity = std::span<const std::uint32_t>;

inline std::uint32_t multiplicity_of(Multiplicity m, std::size_t i) {
  return m.empty() ? 1u : m[i];
}

struct ValidationResult;
inline ValidationResult validate_panel(PanelDataset p);

// A panel that passed validation. Caches each individual's absorption period
// (first t with outcome 1, or T+1 when never absorbed) which, by monotonicity,
// determines the whole outcome row.
class ValidatedPanel {
 public:
  const PanelDataset& data() const { return data_; }
  std::size_t individuals() const { return data_.individuals; }
  int periods() const { return data_.periods; }
  int t_star() const { return data_.t_star; }
  int num_groups() const { return groups_; }
  int group(std::size_t i) const { return data_.groups[i]; }
  int absorption(std::size_t i) const { return absorption_[i]; }
  int outcome(std::size_t i, int t) const { return absorption_[i] <= t ? 1 : 0; }
  std::size_t group_size(int k) const { return group_sizes_[static_cast<std::size_t>(k - 1)]; }

 private:
  friend ValidationResult validate_panel(PanelDataset p);

  explicit ValidatedPanel(PanelDataset p) : data_(std::move(p)) {
    groups_ = data_.num_groups();
    group_sizes_.assign(static_cast<std::size_t>(groups_), 0);
    absorption_.resize(data_.individuals);
    for (std::size_t i = 0; i < data_.individuals; ++i) {
      int first = data_.periods + 1;
      for (int t = 1; t <= data_.periods; ++t)
        if (data_.outcome(i, t)) {
          first = t;
          break;
        }
      absorption_[i] = first;
      ++group_sizes_[static_cast<std::size_t>(data_.groups[i] - 1)];
    }
  }

  PanelDataset data_;
  int groups_ = 0;
  std::vector<int> absorption_;
  std::vector<std::size_t> group_sizes_;
};

struct ValidationResult {
  ValidationReport report;
  std::optional<ValidatedPanel> panel;
};

// Checks the absorbing-state property, group coverage and the treatment
// period bounds. Violations are collected, not thrown.
inline ValidationResult validate_panel(PanelDataset p) {
  if (p.periods < 1 || p.groups.size() != p.individuals ||
      p.outcomes.size() != p.individuals * static_cast<std::size_t>(p.periods))
    throw Error("malformed panel: dimensions do not match");
  ValidationResult result;
  auto& v = result.report.violations;
  for (std::size_t i = 0; i < p.individuals; ++i)
    for (int t = 1; t < p.periods; ++t)
      if (p.outcome(i, t) == 1 && p.outcome(i, t + 1) == 0) {
        std::string id = i < p.ids.size() ? p.ids[i] : std::to_string(i + 1);
        v.push_back({Violation::Kind::NotAbsorbing, i, t,
                     "outcome leaves absorbing state: id " + id + ", period " +
                         std::to_string(t) + " -> " + std::to_string(t + 1)});
      }
  const int k_max = p.num_groups();
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k_max, 0)), 0);
  bool bad_label = false;
  for (int g : p.groups) {
    if (g < 1) {
      bad_label = true;
      continue;
    }
    ++sizes[static_cast<std::size_t>(g - 1)];
  }
  if (bad_label) v.push_back({Violation::Kind::EmptyGroup, 0, 0, "group labels must be positive integers"});
  for (int k = 1; k <= k_max; ++k)
    if (sizes[static_cast<std::size_t>(k - 1)] == 0)
      v.push_back({Violation::Kind::EmptyGroup, 0, 0,
                   "group " + std::to_string(k) + " has no members"});
  if (p.individuals == 0)
    v.push_back({Violation::Kind::EmptyGroup, 0, 0, "panel has no individuals"});
  if (p.t_star == 0)
    v.push_back({Violation::Kind::TreatmentPeriod, 0, 0,
                 "treatment period not set (add a '# t_star=N' line or pass --tstar)"});
  else if (p.t_star <= 1)
    v.push_back({Violation::Kind::TreatmentPeriod, 0, 0, "treatment period must exceed 1"});
  else if (p.t_star > p.periods)
    v.push_back({Violation::Kind::TreatmentPeriod, 0, 0,
                 "treatment period exceeds the number of periods"});
  if (result.report.ok()) result.panel.emplace(ValidatedPanel(std::move(p)));
  return result;
}

// Convenience for library callers that want a hard failure.
inline ValidatedPanel require_valid(PanelDataset p) {
  auto r = validate_panel(std::move(p));
  if (!r.panel) {
    std::string msg = "invalid panel: " + r.report.violations.front().message;
    if (r.report.violations.size() > 1)
      msg += " (+" + std::to_string(r.report.violations.size() - 1) + " more)";
    throw Error(msg);
  }
  return std::move(*r.panel);
}

// Per-group mean outcomes Ybar_{k,t}, t = 1..T.
struct GroupMeanSeries {
  int periods = 0;
  std::vector<double> sizes;                // n_k (frequency-weighted)
  std::vector<std::vector<double>> values;  // [k-1][t-1]

  int groups() const { return static_cast<int>(values.size()); }
  double mean(int k, int t) const {
    return values[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t - 1)];
  }
  double size(int k) const { return sizes[static_cast<std::size_t>(k - 1)]; }
};

inline GroupMeanSeries group_means(const ValidatedPanel& p, Multiplicity mult = {}) {
  const int T = p.periods();
  const int K = p.num_groups();
  std::vector<std::vector<std::uint64_t>> hist(static_cast<std::size_t>(K),
                                               std::vector<std::uint64_t>(static_cast<std::size_t>(T + 2), 0));
  std::vector<std::uint64_t> sizes(static_cast<std::size_t>(K), 0);
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const std::uint32_t m = multiplicity_of(mult, i);
    if (m == 0) continue;
    const auto g = static_cast<std::size_t>(p.group(i) - 1);
    hist[g][static_cast<std::size_t>(p.absorption(i))] += m;
    sizes[g] += m;
  }
  GroupMeanSeries out;
  out.periods = T;
  out.sizes.resize(static_cast<std::size_t>(K));
  out.values.assign(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(T)));
  for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
    if (sizes[k] == 0) throw Error("group " + std::to_string(k + 1) + " is empty in sample");
    const auto nk = static_cast<double>(sizes[k]);
    out.sizes[k] = nk;
    std::uint64_t absorbed = 0;
    for (int t = 1; t <= T; ++t) {
      absorbed += hist[k][static_cast<std::size_t>(t)];
      out.values[k][static_cast<std::size_t>(t - 1)] = static_cast<double>(absorbed) / nk;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion and export
// ---------------------------------------------------------------------------

enum class CsvLayout { Long, Wide };

struct PanelSchema {
  CsvLayout layout = CsvLayout::Long;
  std::string id_column = "id";
  std::string period_column = "period";
  std::string outcome_column = "outcome";
  std::string group_column = "group";
  std::string wide_prefix = "y";  // wide layout: y1..yT
  // Overrides the "# t_star=" comment line written by write_panel_csv.
  std::optional<int> t_star;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

// Sorts ids numerically when every id is an integer, else lexicographically.
inline std::vector<std::string> ordered_ids(const std::set<std::string>& ids) {
  std::vector<std::string> out(ids.begin(), ids.end());
  const bool numeric = std::all_of(out.begin(), out.end(), [](const std::string& s) {
    return parse_int(s).has_value();
  });
  if (numeric)
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return *parse_int(a) < *parse_int(b);
    });
  return out;
}

struct RawCovariate {
  std::string name;
  CovariateKind kind;
  std::size_t column;
};

}  // namespace detail

// Reads a long (id,period,outcome,group[,d_*,x_*]) or wide (id,group,y1..yT)
// panel. Covariates are typed by header prefix: d_ discrete, x_ real.
inline PanelDataset load_panel_csv(const std::filesystem::path& path, const PanelSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::optional<int> t_star_comment;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line.front() == '#') {
      const auto pos = line.find("t_star=");
      if (pos != std::string::npos)
        if (auto v = detail::parse_int(detail::split_csv(line.substr(pos + 7)).front()))
          t_star_comment = static_cast<int>(*v);
      continue;
    }
    for (auto f : detail::split_csv(line)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw Error("empty panel file '" + path.string() + "'");
  if (header.front().size() >= 3 && header.front().compare(0, 3, "\xEF\xBB\xBF") == 0)
    header.front().erase(0, 3);

  auto find_column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  };
  auto require_column = [&](const std::string& name) {
    if (auto j = find_column(name)) return *j;
    throw Error("missing column '" + name + "'");
  };

  const bool wide = schema.layout == CsvLayout::Wide;
  const std::size_t id_col = require_column(schema.id_column);
  const std::size_t group_col = require_column(schema.group_column);
  std::size_t period_col = 0, outcome_col = 0;
  std::map<int, std::size_t> wide_cols;  // period -> column
  if (!wide) {
    period_col = require_column(schema.period_column);
    outcome_col = require_column(schema.outcome_column);
  }

  std::vector<detail::RawCovariate> raw_covs;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& h = header[j];
    if (j == id_col || j == group_col || (!wide && (j == period_col || j == outcome_col))) continue;
    if (h.rfind("d_", 0) == 0) {
      raw_covs.push_back({h, CovariateKind::Discrete, j});
    } else if (h.rfind("x_", 0) == 0) {
      raw_covs.push_back({h, CovariateKind::Real, j});
    } else if (wide && h.rfind(schema.wide_prefix, 0) == 0 &&
               detail::parse_int(std::string_view(h).substr(schema.wide_prefix.size()))) {
      const auto t = static_cast<int>(*detail::parse_int(std::string_view(h).substr(schema.wide_prefix.size())));
      if (t < 1 || wide_cols.count(t)) throw Error("bad outcome column '" + h + "'");
      wide_cols[t] = j;
    } else {
      throw Error("unrecognised column '" + h + "' (covariates need a d_ or x_ prefix)");
    }
  }

  struct Record {
    int group = 0;
    std::map<int, int> outcome;
    std::vector<std::string> cov;
    bool has_cov = false;
  };
  std::unordered_map<std::string, Record> records;
  std::set<std::string> ids;
  int max_period = 0;

  if (wide) {
    if (wide_cols.empty()) throw Error("wide layout needs outcome columns " + schema.wide_prefix + "1.." );
    max_period = wide_cols.rbegin()->first;
    for (int t = 1; t <= max_period; ++t)
      if (!wide_cols.count(t)) throw Error("ragged panel: no column for period " + std::to_string(t));
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw Error("expected " + std::to_string(header.size()) + " fields" + detail::at_line(line_no));
    const std::string id(fields[id_col]);
    if (id.empty()) throw Error("empty id" + detail::at_line(line_no));
    const auto g = detail::parse_int(fields[group_col]);
    if (!g || *g < 1) throw Error("group must be a positive integer" + detail::at_line(line_no));

    auto [it, inserted] = records.try_emplace(id);
    Record& rec = it->second;
    if (!wide && !inserted && rec.group != *g)
      throw Error("group changes within id " + id + detail::at_line(line_no));
    if (wide && !inserted) throw Error("duplicate row for id " + id + detail::at_line(line_no));
    rec.group = static_cast<int>(*g);
    ids.insert(id);

    auto put_outcome = [&](int t, std::string_view cell) {
      const auto y = detail::parse_int(cell);
      if (!y || (*y != 0 && *y != 1)) throw Error("non-binary outcome" + detail::at_line(line_no));
      if (!rec.outcome.emplace(t, static_cast<int>(*y)).second)
        throw Error("duplicate row: id " + id + ", period " + std::to_string(t) + detail::at_line(line_no));
    };
    if (wide) {
      for (const auto& [t, col] : wide_cols) put_outcome(t, fields[col]);
    } else {
      const auto t = detail::parse_int(fields[period_col]);
      if (!t || *t < 1) throw Error("period must be a positive integer" + detail::at_line(line_no));
      max_period = std::max(max_period, static_cast<int>(*t));
      put_outcome(static_cast<int>(*t), fields[outcome_col]);
    }

    std::vector<std::string> cov;
    cov.reserve(raw_covs.size());
    for (const auto& rc : raw_covs) cov.emplace_back(fields[rc.column]);
    if (rec.has_cov && rec.cov != cov)
      throw Error("time-varying covariate for id " + id + detail::at_line(line_no));
    rec.cov = std::move(cov);
    rec.has_cov = true;
  }
  if (ids.empty()) throw Error("panel has no rows");

  PanelDataset p;
  p.ids = detail::ordered_ids(ids);
  p.individuals = p.ids.size();
  p.periods = max_period;
  p.t_star = schema.t_star.value_or(t_star_comment.value_or(0));
  p.groups.resize(p.individuals);
  p.outcomes.assign(p.individuals * static_cast<std::size_t>(max_period), 0);
  for (std::size_t i = 0; i < p.individuals; ++i) {
    const Record& rec = records.at(p.ids[i]);
    p.groups[i] = rec.group;
    for (int t = 1; t <= max_period; ++t) {
      auto it = rec.outcome.find(t);
      if (it == rec.outcome.end())
        throw Error("ragged panel: id " + p.ids[i] + " has no row for period " + std::to_string(t));
      p.set_outcome(i, t, it->second);
    }
  }
  for (std::size_t c = 0; c < raw_covs.size(); ++c) {
    Covariate cov;
    cov.name = raw_covs[c].name;
    cov.kind = raw_covs[c].kind;
    if (cov.kind == CovariateKind::Discrete) {
      std::set<std::string> levels;
      for (const auto& id : p.ids) levels.insert(records.at(id).cov[c]);
      cov.levels.assign(levels.begin(), levels.end());
      cov.codes.reserve(p.individuals);
      for (const auto& id : p.ids) {
        const auto& v = records.at(id).cov[c];
        cov.codes.push_back(static_cast<int>(
            std::lower_bound(cov.levels.begin(), cov.levels.end(), v) - cov.levels.begin()));
      }
    } else {
      cov.values.reserve(p.individuals);
      for (const auto& id : p.ids) {
        const auto v = detail::parse_double(records.at(id).cov[c]);
        if (!v) throw Error("non-numeric value for real covariate " + cov.name + " (id " + id + ")");
        cov.values.push_back(*v);
      }
    }
    p.covariates.push_back(std::move(cov));
  }
  return p;
}

// Long-format export. The leading comment records t* so a reload is exact.
inline void write_panel_csv(const PanelDataset& p, std::ostream& out) {
  out << "# t_star=" << p.t_star << "\n";
  out << "id,period,outcome,group";
  for (const auto& c : p.covariates) out << ',' << c.name;
  out << "\n";
  for (std::size_t i = 0; i < p.individuals; ++i) {
    std::string cov_suffix;
    for (const auto& c : p.covariates) {
      cov_suffix += ',';
      cov_suffix += c.kind == CovariateKind::Discrete
                        ? c.levels[static_cast<std::size_t>(c.codes[i])]
                        : detail::format_double(c.values[i]);
    }
    for (int t = 1; t <= p.periods; ++t)
      out << p.ids[i] << ',' << t << ',' << p.outcome(i, t) << ',' << p.groups[i] << cov_suffix << "\n";
  }
}

inline void write_panel_csv(const PanelDataset& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_panel_csv(p, out);
}

}  // namespace hazdid
