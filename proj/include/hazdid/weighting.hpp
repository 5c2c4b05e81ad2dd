#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hazdid/error.hpp"
#include "hazdid/panel.hpp"

namespace hazdid {

// Empirical-frequency weights for one discrete covariate, one row per level.
// weight is NaN where no untreated period-1 survivor carries the level.
struct DiscreteWeightTable {
  std::string covariate;
  std::vector<std::string> levels;
  std::vector<double> count_treated;    // S_1(x)
  std::vector<double> count_untreated;  // S_2(x)
  std::vector<double> weight;
  std::vector<bool> dropped;  // treated survivors present, no untreated match
};

// Design-matrix layout of a fitted propensity model.
struct PropensityTerm {
  std::string covariate;
  CovariateKind kind = CovariateKind::Real;
  int level = -1;  // discrete: level code of this dummy column
  int power = 1;   // real: exponent
  std::string label() const {
    return kind == CovariateKind::Discrete ? covariate + "=" + std::to_string(level)
                                           : (power == 1 ? covariate : covariate + "^" + std::to_string(power));
  }
};

struct PropensityModel {
  std::vector<PropensityTerm> terms;  // column 0 is the intercept, not listed
  std::vector<std::vector<int>> seen_levels;  // per discrete covariate in terms (by name order)
  std::vector<std::string> discrete_names;
  Eigen::VectorXd coefficients;
  int iterations = 0;
  double gradient_norm = 0;

  // Feature row for individual i; nullopt if a discrete level was unseen at fit.
  std::optional<Eigen::RowVectorXd> design_row(const PanelDataset& p, std::size_t i) const {
    for (std::size_t d = 0; d < discrete_names.size(); ++d) {
      const int code = p.require_covariate(discrete_names[d]).codes[i];
      const auto& seen = seen_levels[d];
      if (!std::binary_search(seen.begin(), seen.end(), code)) return std::nullopt;
    }
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms.size() + 1));
    row(0) = 1.0;
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto& term = terms[j];
      const auto& cov = p.require_covariate(term.covariate);
      row(static_cast<Eigen::Index>(j + 1)) =
          term.kind == CovariateKind::Discrete ? (cov.codes[i] == term.level ? 1.0 : 0.0)
                                               : std::pow(cov.values[i], term.power);
    }
    return row;
  }

  std::optional<double> probability(const PanelDataset& p, std::size_t i) const {
    auto row = design_row(p, i);
    if (!row) return std::nullopt;
    const double eta = row->dot(coefficients);
    return 1.0 / (1.0 + std::exp(-eta));
  }
};

// Balancing weight omega for untreated individuals, estimated either from
// discrete frequencies or from a propensity model.
struct WeightFunction {
  enum class Kind { Discrete, Propensity };
  Kind kind = Kind::Discrete;
  std::optional<DiscreteWeightTable> table;
  std::optional<PropensityModel> model;
  double survivors_treated = 0;    // S_1
  double survivors_untreated = 0;  // S_2
  std::vector<std::size_t> dropped_individuals;  // treated rows lacking overlap
  double dropped_count = 0;                      // frequency-weighted

  // omega(X_i); nullopt where the weight is undefined (support violation).
  std::optional<double> operator()(const ValidatedPanel& p, std::size_t i) const {
    if (kind == Kind::Discrete) {
      const int code = p.data().require_covariate(table->covariate).codes[i];
      const double w = table->weight[static_cast<std::size_t>(code)];
      if (std::isnan(w)) return std::nullopt;
      return w;
    }
    const auto prob = model->probability(p.data(), i);
    if (!prob) return std::nullopt;
    if (*prob >= 1.0 - 1e-12) throw Error("degenerate propensity");
    return *prob * survivors_untreated / ((1.0 - *prob) * survivors_treated);
  }
};

// omega(x) = [S_1(x)/S_1] / [S_2(x)/S_2] over period-1 survivors. Treated
// individuals whose level has no untreated survivor are listed as dropped.
inline WeightFunction estimate_discrete_weights(const ValidatedPanel& p, const std::string& covariate,
                                                Multiplicity mult = {}) {
  const auto& cov = p.data().require_covariate(covariate);
  if (cov.kind != CovariateKind::Discrete)
    throw Error("covariate '" + covariate + "' is not discrete");
  const std::size_t levels = cov.levels.size();
  DiscreteWeightTable table;
  table.covariate = covariate;
  table.levels = cov.levels;
  table.count_treated.assign(levels, 0.0);
  table.count_untreated.assign(levels, 0.0);
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const auto m = multiplicity_of(mult, i);
    if (m == 0 || p.outcome(i, 1) == 1) continue;
    const auto code = static_cast<std::size_t>(cov.codes[i]);
    if (p.group(i) == 1) {
      table.count_treated[code] += m;
      s1 += m;
    } else if (p.group(i) == 2) {
      table.count_untreated[code] += m;
      s2 += m;
    }
  }
  if (s2 == 0) throw Error("empty untreated risk set");
  if (s1 == 0) throw Error("empty treated risk set");

  table.weight.assign(levels, std::numeric_limits<double>::quiet_NaN());
  table.dropped.assign(levels, false);
  for (std::size_t x = 0; x < levels; ++x) {
    if (table.count_untreated[x] > 0)
      table.weight[x] = (table.count_treated[x] / s1) / (table.count_untreated[x] / s2);
    else if (table.count_treated[x] > 0)
      table.dropped[x] = true;
  }

  WeightFunction w;
  w.kind = WeightFunction::Kind::Discrete;
  w.survivors_treated = s1;
  w.survivors_untreated = s2;
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const auto m = multiplicity_of(mult, i);
    if (m == 0 || p.group(i) != 1) continue;
    if (table.count_untreated[static_cast<std::size_t>(cov.codes[i])] == 0) {
      w.dropped_individuals.push_back(i);
      w.dropped_count += m;
    }
  }
  w.table = std::move(table);
  return w;
}

struct PropensityOptions {
  int degree = 1;  // polynomial order for real-valued features
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double separation_bound = 30.0;
  double max_linear_predictor = 15.0;  // fitted p within ~3e-7 of 0 or 1
};

// Logistic regression of 1{G=1} on the features over period-1 survivors of
// groups 1 and 2, by IRLS with step-halving.
inline PropensityModel fit_propensity(const ValidatedPanel& p, const std::vector<std::string>& features,
                                      const PropensityOptions& opt = {}, Multiplicity mult = {}) {
  if (features.empty()) throw Error("propensity model needs at least one feature");
  std::vector<std::size_t> rows;
  std::vector<double> freq, y;
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const auto m = multiplicity_of(mult, i);
    if (m == 0 || p.outcome(i, 1) == 1 || p.group(i) > 2) continue;
    rows.push_back(i);
    freq.push_back(m);
    y.push_back(p.group(i) == 1 ? 1.0 : 0.0);
  }
  const bool has_treated = std::any_of(y.begin(), y.end(), [](double v) { return v == 1.0; });
  const bool has_untreated = std::any_of(y.begin(), y.end(), [](double v) { return v == 0.0; });
  if (!has_treated || !has_untreated)
    throw Error("propensity subsample must contain survivors from both groups");

  PropensityModel model;
  for (const auto& name : features) {
    const auto& cov = p.data().require_covariate(name);
    if (cov.kind == CovariateKind::Discrete) {
      std::vector<int> seen;
      for (auto i : rows) seen.push_back(cov.codes[i]);
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      for (std::size_t l = 1; l < seen.size(); ++l)
        model.terms.push_back({name, CovariateKind::Discrete, seen[l], 1});
      model.discrete_names.push_back(name);
      model.seen_levels.push_back(std::move(seen));
    } else {
      for (int d = 1; d <= opt.degree; ++d) model.terms.push_back({name, CovariateKind::Real, -1, d});
    }
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto cols = static_cast<Eigen::Index>(model.terms.size() + 1);
  Eigen::MatrixXd X(n, cols);
  Eigen::VectorXd f(n), target(n);
  model.coefficients = Eigen::VectorXd::Zero(cols);
  for (Eigen::Index r = 0; r < n; ++r) {
    X.row(r) = *model.design_row(p.data(), rows[static_cast<std::size_t>(r)]);
    f(r) = freq[static_cast<std::size_t>(r)];
    target(r) = y[static_cast<std::size_t>(r)];
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(f.cwiseSqrt().asDiagonal() * X);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols) throw Error("collinear features");
  }

  auto loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double e = eta(r);
      const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += f(r) * (target(r) * e - log1pexp);
    }
    return ll;
  };

  Eigen::VectorXd beta = model.coefficients;
  double ll = loglik(beta);
  for (int iter = 1;; ++iter) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      prob(r) = 1.0 / (1.0 + std::exp(-eta(r)));
      w(r) = f(r) * prob(r) * (1.0 - prob(r));
    }
    const Eigen::VectorXd grad = X.transpose() * (f.cwiseProduct(target - prob));
    model.iterations = iter - 1;
    model.gradient_norm = grad.cwiseAbs().maxCoeff();
    if (model.gradient_norm < opt.gradient_tolerance || iter > opt.max_iterations) break;

    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw Error("separation: propensity not identified");
    Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double cand_ll = loglik(candidate);
    for (int halve = 0; halve < 30 && !(cand_ll >= ll - 1e-12 * std::abs(ll)); ++halve) {
      scale *= 0.5;
      candidate = beta + scale * step;
      cand_ll = loglik(candidate);
    }
    beta = candidate;
    ll = cand_ll;
    if (beta.cwiseAbs().maxCoeff() > opt.separation_bound)
      throw Error("separation: propensity not identified");
  }
  // quasi-complete separation converges with some fitted probabilities pinned at 0 or 1
  if ((X * beta).cwiseAbs().maxCoeff() > opt.max_linear_predictor)
    throw Error("separation: propensity not identified");
  model.coefficients = beta;
  return model;
}

// omega(x) = p(x) S_2 / ((1 - p(x)) S_1), with S_k = (1 - Ybar_{k,1}) n_k.
inline WeightFunction propensity_weights(const PropensityModel& model, const ValidatedPanel& p,
                                         Multiplicity mult = {}) {
  WeightFunction w;
  w.kind = WeightFunction::Kind::Propensity;
  w.model = model;
  for (std::size_t i = 0; i < p.individuals(); ++i) {
    const auto m = multiplicity_of(mult, i);
    if (m == 0 || p.outcome(i, 1) == 1) continue;
    if (p.group(i) == 1) w.survivors_treated += m;
    if (p.group(i) == 2) w.survivors_untreated += m;
  }
  if (w.survivors_untreated == 0) throw Error("empty untreated risk set");
  if (w.survivors_treated == 0) throw Error("empty treated risk set");
  return w;
}

}  // namespace hazdid
