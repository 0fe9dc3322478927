// Exponential-weights aggregation of truncated LPE weak estimators over a
// dictionary Lambda = directions x smoothness grid x radius grid, with the
// ERM baseline, the lattice preselection loop and leave-one-out selection
// of the temperature.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sidx/core_data.hpp"
#include "sidx/lpe.hpp"
#include "sidx/sphere_lattice.hpp"

namespace sidx {

// ---------------------------------------------------------------------------
// Weak estimators

class WeakEstimator {
 public:
  WeakEstimator(std::shared_ptr<const SortedProjection> data, LpeConfig cfg, double truncation)
      : lpe_(std::move(data), std::move(cfg)), truncation_(truncation) {
    if (!(truncation_ > 0.0)) throw InvalidConfig("WeakEstimator: truncation must be > 0");
  }

  [[nodiscard]] std::span<const double> direction() const noexcept { return lpe_.data().direction; }
  [[nodiscard]] double smoothness() const noexcept { return lpe_.config().smoothness; }
  [[nodiscard]] double radius() const noexcept { return lpe_.config().radius; }
  [[nodiscard]] double truncation() const noexcept { return truncation_; }
  [[nodiscard]] const LocalPolynomialEstimator& lpe() const noexcept { return lpe_; }

  [[nodiscard]] double predict(std::span<const double> x) const {
    return truncate(lpe_.predict_fast(dot(direction(), x)).value, truncation_);
  }
  double operator()(std::span<const double> x) const { return predict(x); }

 private:
  LocalPolynomialEstimator lpe_;
  double truncation_;
};

// Sum of squared residuals over `learning`, not divided by its size.
template <class Predictor>
double empirical_risk(const Predictor& predictor, const RegressionSample& learning) {
  if (learning.empty()) throw std::invalid_argument("empirical_risk: empty learning sample");
  double r = 0.0;
  for (std::size_t i = 0; i < learning.size(); ++i) {
    const double e = learning.y(i) - predictor(learning.x(i));
    r += e * e;
  }
  return r;
}

// w_l = exp(-T R_l) / sum_m exp(-T R_m), evaluated after subtracting the
// smallest risk.
inline Vector gibbs_weights(std::span<const double> risks, double temperature) {
  if (risks.empty()) throw std::invalid_argument("gibbs_weights: empty risk vector");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("gibbs_weights: temperature must be positive and finite");
  }
  double rmin = std::numeric_limits<double>::infinity();
  for (double r : risks) {
    if (!std::isfinite(r)) throw std::invalid_argument("gibbs_weights: non-finite risk");
    rmin = std::min(rmin, r);
  }
  Vector w(risks.size());
  double total = 0.0;
  for (std::size_t i = 0; i < risks.size(); ++i) {
    w[i] = std::exp(-temperature * (risks[i] - rmin));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Index of the smallest risk; ties go to the lowest index.
inline std::size_t erm_select(std::span<const double> risks) {
  if (risks.empty()) throw std::invalid_argument("erm_select: empty risk vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < risks.size(); ++i) {
    if (risks[i] < risks[best]) best = i;
  }
  return best;
}

struct GibbsEnsemble {
  std::vector<WeakEstimator> members;
  Vector risks;
  double temperature = 1.0;
  Vector weights;

  GibbsEnsemble() = default;
  GibbsEnsemble(std::vector<WeakEstimator> m, Vector r, double t)
      : members(std::move(m)), risks(std::move(r)), temperature(t) {
    if (members.size() != risks.size()) throw std::invalid_argument("GibbsEnsemble: size mismatch");
    weights = gibbs_weights(risks, temperature);
  }

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }

  [[nodiscard]] std::size_t top_member() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < weights.size(); ++i) {
      if (weights[i] > weights[best]) best = i;
    }
    return best;
  }
};

inline double aggregate_predict(const GibbsEnsemble& ens, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < ens.members.size(); ++i) s += ens.weights[i] * ens.members[i].predict(x);
  return s;
}

// Convex combination of precomputed member values with the given weights.
inline double combine(std::span<const double> weights, std::span<const double> values) {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * values[i];
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline configuration

enum class CvMode { exact_loo, weights_only_loo };

struct TemperatureGrid {
  Vector values = default_values();
  std::optional<CvMode> cv_mode;  // empty: exact up to 1000 observations

  static Vector default_values() {
    Vector v;
    for (int k = 1; k <= 50; ++k) v.push_back(static_cast<double>(k) / 10.0);
    return v;
  }

  [[nodiscard]] CvMode mode_for(std::size_t n) const {
    if (cv_mode) return *cv_mode;
    return n > 1000 ? CvMode::weights_only_loo : CvMode::exact_loo;
  }

  void validate() const {
    if (values.empty()) throw InvalidConfig("TemperatureGrid: empty grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0)) throw InvalidConfig("TemperatureGrid: temperatures must be > 0");
      if (i > 0 && !(values[i] > values[i - 1])) {
        throw InvalidConfig("TemperatureGrid: values must be strictly increasing");
      }
    }
  }
};

inline const char* to_string(CvMode m) {
  return m == CvMode::exact_loo ? "exact" : "weights-only";
}

struct PipelineConfig {
  ParamGrid grid;
  int degree = 5;
  double noise_bound = 1.0;              // sigma_1
  std::optional<double> truncation;      // empty: max |Y_i| over the training part
  double degeneracy_tol = 1e-10;
  SplitConfig split;
  double s_min = 1.0;                    // smoothness behind the final lattice step
  std::optional<double> temperature;     // empty: cross-validated
  TemperatureGrid temperatures;

  void validate() const {
    grid.validate();
    temperatures.validate();
    if (temperature && !(*temperature > 0.0)) throw InvalidConfig("PipelineConfig: temperature must be > 0");
    if (!(s_min > 0.0)) throw InvalidConfig("PipelineConfig: s_min must be > 0");
    member_config(grid.smoothness_values.back(), grid.radius_values.front()).validate();
  }

  [[nodiscard]] LpeConfig member_config(double s, double l) const {
    LpeConfig c;
    c.degree = degree;
    c.smoothness = s;
    c.radius = l;
    c.noise_bound = noise_bound;
    c.truncation = truncation;
    c.degeneracy_tol = degeneracy_tol;
    return c;
  }

  [[nodiscard]] double truncation_for(const RegressionSample& training) const {
    if (truncation) return *truncation;
    const double q = training.max_abs_response();
    return q > 0.0 ? q : 1.0;
  }
};

// ---------------------------------------------------------------------------
// Dictionary: weak estimators fitted on the training part together with
// their raw predictions and bandwidths at the learning points.

struct Dictionary {
  RegressionSample training{1};
  RegressionSample learning{1};
  std::vector<Vector> directions;
  std::vector<std::shared_ptr<const SortedProjection>> projections;  // per direction
  std::vector<WeakEstimator> members;  // direction-major, then smoothness, then radius
  std::vector<std::size_t> member_direction;
  double truncation = 1.0;
  Vector learning_z;     // [direction][learning point]
  Vector learning_raw;   // [member][learning point], before truncation
  Vector learning_bw;    // [member][learning point]
  Vector risks;

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
  [[nodiscard]] std::size_t n_learning() const noexcept { return learning.size(); }

  [[nodiscard]] double learning_value(std::size_t member, std::size_t point) const {
    return truncate(learning_raw[member * n_learning() + point], truncation);
  }
};

inline Dictionary fit_dictionary(const RegressionSample& training, const RegressionSample& learning,
                                 std::vector<Vector> directions, const PipelineConfig& cfg) {
  if (training.empty() || learning.empty()) {
    throw InvalidConfig("fit_dictionary: empty training or learning part");
  }
  if (directions.empty()) throw InvalidConfig("fit_dictionary: no directions");
  Dictionary dict;
  dict.training = training;
  dict.learning = learning;
  dict.truncation = cfg.truncation_for(training);
  dict.directions = std::move(directions);
  const std::size_t nl = learning.size();
  const auto& g = cfg.grid;
  dict.learning_z.resize(dict.directions.size() * nl);
  for (std::size_t di = 0; di < dict.directions.size(); ++di) {
    const auto& v = dict.directions[di];
    auto proj = std::make_shared<const SortedProjection>(
        SortedProjection::from(project_unchecked(training, v)));
    dict.projections.push_back(proj);
    for (std::size_t l = 0; l < nl; ++l) dict.learning_z[di * nl + l] = dot(v, learning.x(l));
    for (double s : g.smoothness_values) {
      for (double rad : g.radius_values) {
        dict.members.emplace_back(proj, cfg.member_config(s, rad), dict.truncation);
        dict.member_direction.push_back(di);
      }
    }
  }
  const std::size_t nm = dict.members.size();
  dict.learning_raw.resize(nm * nl);
  dict.learning_bw.resize(nm * nl);
  dict.risks.assign(nm, 0.0);
  for (std::size_t k = 0; k < nm; ++k) {
    const auto& lpe = dict.members[k].lpe();
    const std::size_t di = dict.member_direction[k];
    double risk = 0.0;
    for (std::size_t l = 0; l < nl; ++l) {
      const LocalFit f = lpe.predict_fast(dict.learning_z[di * nl + l]);
      dict.learning_raw[k * nl + l] = f.value;
      dict.learning_bw[k * nl + l] = f.bandwidth;
      const double e = learning.y(l) - truncate(f.value, dict.truncation);
      risk += e * e;
    }
    dict.risks[k] = risk;
  }
  return dict;
}

inline GibbsEnsemble make_ensemble(const Dictionary& dict, double temperature) {
  return GibbsEnsemble(dict.members, dict.risks, temperature);
}

// Raw member values at arbitrary design points, [member][point].
inline Vector member_values(const Dictionary& dict, const RegressionSample& points) {
  const std::size_t np = points.size();
  Vector out(dict.size() * np);
  Vector zs(np);
  std::size_t current = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = 0; k < dict.size(); ++k) {
    const std::size_t di = dict.member_direction[k];
    if (di != current) {
      for (std::size_t p = 0; p < np; ++p) zs[p] = dot(dict.directions[di], points.x(p));
      current = di;
    }
    const auto& lpe = dict.members[k].lpe();
    for (std::size_t p = 0; p < np; ++p) {
      out[k * np + p] = truncate(lpe.predict_fast(zs[p]).value, dict.truncation);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preselection

struct PreselectResult {
  SphereLattice section{2, 1.0};
  std::size_t iterations = 0;
  double initial_step = 0.0;
  double target_step = 0.0;
  std::vector<Vector> centers;  // v-hat after each stage
  std::size_t recoveries = 0;   // empty sections replaced by {v-hat}
};

inline Vector dictionary_risks(const RegressionSample& training, const RegressionSample& learning,
                               const SphereLattice& lat, const PipelineConfig& cfg) {
  return fit_dictionary(training, learning, lat.points(), cfg).risks;
}

// Coarse-to-fine search: ERM over the current section, halve the step,
// keep the finer lattice points within twice the new step of the winner.
inline PreselectResult preselect_with_steps(const RegressionSample& training,
                                            const RegressionSample& learning,
                                            const PipelineConfig& cfg, double initial_step,
                                            double target_step) {
  const std::size_t d = training.dim();
  if (d < 2) throw std::invalid_argument("preselect: dimension must be >= 2");
  PreselectResult res;
  res.initial_step = initial_step;
  res.target_step = target_step;
  double step = initial_step;
  SphereLattice current = build_lattice(d, std::min(step, 2.0));
  const std::size_t per_direction =
      cfg.grid.smoothness_values.size() * cfg.grid.radius_values.size();
  while (step > target_step) {
    const Vector risks = dictionary_risks(training, learning, current, cfg);
    const std::size_t best = erm_select(risks);
    Vector center = current.point_vector(best / per_direction);
    step /= 2.0;
    current = build_lattice_section(d, std::min(step, 2.0), center, 2.0 * step);
    if (current.empty()) {
      current = SphereLattice(d, step);
      current.push_back(center);
      ++res.recoveries;
    }
    res.centers.push_back(std::move(center));
    ++res.iterations;
  }
  res.section = std::move(current);
  return res;
}

inline PreselectResult preselect(const RegressionSample& training, const RegressionSample& learning,
                                 const PipelineConfig& cfg, std::size_t n, double s_min) {
  const double dn = static_cast<double>(training.dim());
  const double nn = static_cast<double>(n);
  const double target = lattice_step(nn, s_min);
  const double initial = std::pow(2.0 * dn * nn, -1.0 / (2.0 * (dn - 1.0)));
  return preselect_with_steps(training, learning, cfg, initial, target);
}

// ---------------------------------------------------------------------------
// Leave-one-out temperature selection

struct CvResult {
  double temperature = 1.0;
  Vector scores;  // sum over held-out points of squared errors, per grid value
  CvMode mode = CvMode::exact_loo;
  std::size_t folds = 0;
};

namespace detail {

inline void accumulate_fold(std::span<const double> risks, std::span<const double> values,
                            double y, std::span<const double> temps, Vector& scores) {
  for (std::size_t t = 0; t < temps.size(); ++t) {
    const Vector w = gibbs_weights(risks, temps[t]);
    const double e = y - combine(w, values);
    scores[t] += e * e;
  }
}

}  // namespace detail

// LOO scores on a fitted dictionary. The direction set is held fixed.
// Held-out learning points change only the risks; held-out training points
// require refitting every member, which is done incrementally: a member's
// value at a learning point changes only if the removed projection lies in
// its previous window.
inline CvResult cv_scores(const Dictionary& dict, std::span<const double> temps, CvMode mode,
                          const PipelineConfig& cfg) {
  const std::size_t nl = dict.n_learning();
  const std::size_t nt = dict.training.size();
  const std::size_t nm = dict.size();
  if (nl < 2) throw InvalidConfig("cv_temperature: a fold leaves the learning part empty");
  if (mode == CvMode::exact_loo && nt < 2) {
    throw InvalidConfig("cv_temperature: a fold leaves the training part empty");
  }
  CvResult res;
  res.mode = mode;
  res.scores.assign(temps.size(), 0.0);
  Vector risks(nm);
  Vector values(nm);

  // Held-out learning point.
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t k = 0; k < nm; ++k) {
      double r = 0.0;
      for (std::size_t l = 0; l < nl; ++l) {
        if (l == i) continue;
        const double e = dict.learning.y(l) - dict.learning_value(k, l);
        r += e * e;
      }
      risks[k] = r;
      values[k] = dict.learning_value(k, i);
    }
    detail::accumulate_fold(risks, values, dict.learning.y(i), temps, res.scores);
    ++res.folds;
  }

  if (mode == CvMode::exact_loo) {
    Vector raw(nl);
    std::vector<double> zj(dict.directions.size());
    for (std::size_t j = 0; j < nt; ++j) {
      double q = dict.truncation;
      if (!cfg.truncation) {
        q = 0.0;
        for (std::size_t t = 0; t < nt; ++t) {
          if (t != j) q = std::max(q, std::abs(dict.training.y(t)));
        }
        if (!(q > 0.0)) q = 1.0;
      }
      const auto xj = dict.training.x(j);
      for (std::size_t di = 0; di < dict.directions.size(); ++di) zj[di] = dot(dict.directions[di], xj);
      for (std::size_t k = 0; k < nm; ++k) {
        const std::size_t di = dict.member_direction[k];
        const auto& lpe = dict.members[k].lpe();
        const std::size_t pos = dict.projections[di]->rank[j];
        double r = 0.0;
        for (std::size_t l = 0; l < nl; ++l) {
          const double zl = dict.learning_z[di * nl + l];
          double v = dict.learning_raw[k * nl + l];
          if (std::abs(zl - zj[di]) <= dict.learning_bw[k * nl + l]) {
            v = lpe.predict_fast(zl, pos).value;
          }
          const double e = dict.learning.y(l) - truncate(v, q);
          r += e * e;
        }
        risks[k] = r;
        values[k] = truncate(lpe.predict_fast(zj[di], pos).value, q);
      }
      detail::accumulate_fold(risks, values, dict.training.y(j), temps, res.scores);
      ++res.folds;
    }
  }

  std::size_t best = 0;
  for (std::size_t t = 1; t < temps.size(); ++t) {
    if (res.scores[t] < res.scores[best]) best = t;
  }
  res.temperature = temps[best];
  return res;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline

struct FitResult {
  GibbsEnsemble ensemble;
  Dictionary dictionary;
  SplitResult split;
  std::optional<PreselectResult> preselection;
  std::optional<CvResult> cv;
};

inline std::vector<Vector> pipeline_directions(const RegressionSample& training,
                                               const RegressionSample& learning,
                                               const PipelineConfig& cfg, std::size_t n,
                                               std::optional<PreselectResult>& trace) {
  if (!cfg.grid.directions.empty()) return cfg.grid.directions;
  trace = preselect(training, learning, cfg, n, cfg.s_min);
  return trace->section.points();
}

inline CvResult cv_on_dictionary(const Dictionary& dict, const PipelineConfig& cfg, std::size_t n) {
  const auto& temps = cfg.temperatures.values;
  if (temps.size() == 1) {
    CvResult r;
    r.temperature = temps.front();
    r.mode = cfg.temperatures.mode_for(n);
    return r;
  }
  return cv_scores(dict, temps, cfg.temperatures.mode_for(n), cfg);
}

inline FitResult fit_pipeline(const RegressionSample& sample, const PipelineConfig& cfg) {
  cfg.validate();
  if (sample.size() < 8) throw std::invalid_argument("fit_single_index: need at least 8 observations");
  if (sample.dim() < 2) throw std::invalid_argument("fit_single_index: need d >= 2");
  SplitResult parts = split(sample, cfg.split);
  std::optional<PreselectResult> trace;
  auto dirs = pipeline_directions(parts.training, parts.learning, cfg, sample.size(), trace);
  Dictionary dict = fit_dictionary(parts.training, parts.learning, std::move(dirs), cfg);
  std::optional<CvResult> cv;
  double t = 0.0;
  if (cfg.temperature) {
    t = *cfg.temperature;
  } else {
    cv = cv_on_dictionary(dict, cfg, sample.size());
    t = cv->temperature;
  }
  GibbsEnsemble ens = make_ensemble(dict, t);
  return {std::move(ens), std::move(dict), std::move(parts), std::move(trace), std::move(cv)};
}

inline GibbsEnsemble fit_single_index(const RegressionSample& sample, const PipelineConfig& cfg) {
  return fit_pipeline(sample, cfg).ensemble;
}

// Temperature minimizing the leave-one-out squared error over `grid`.
inline double cv_temperature(const RegressionSample& sample, const TemperatureGrid& grid,
                             PipelineConfig cfg) {
  grid.validate();
  if (sample.size() < 8) throw std::invalid_argument("cv_temperature: need at least 8 observations");
  if (grid.values.size() == 1) return grid.values.front();
  cfg.temperatures = grid;
  cfg.temperature.reset();
  return fit_pipeline(sample, cfg).cv->temperature;
}

}  // namespace sidx
