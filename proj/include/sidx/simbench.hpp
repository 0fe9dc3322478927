// Synthetic single-index data, Monte Carlo MISE and the replication
// harness that produces MISE-versus-temperature tables.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sidx/aggregation.hpp"
#include "sidx/core_data.hpp"

namespace sidx {

enum class LinkKind { hardsine, oscsine, custom };

struct LinkFunction {
  LinkKind kind = LinkKind::hardsine;
  std::function<double(double)> custom;

  static LinkFunction hardsine() { return {LinkKind::hardsine, {}}; }
  static LinkFunction oscsine() { return {LinkKind::oscsine, {}}; }
  static LinkFunction from(std::function<double(double)> f) {
    return {LinkKind::custom, std::move(f)};
  }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case LinkKind::hardsine: return "hardsine";
      case LinkKind::oscsine: return "oscsine";
      case LinkKind::custom: return "custom";
    }
    return "custom";
  }

  double operator()(double t) const;
};

inline double link_eval(const LinkFunction& link, double t) {
  constexpr double pi = std::numbers::pi;
  switch (link.kind) {
    case LinkKind::hardsine: return 2.0 * std::sin(1.0 + t) * std::sin(2.0 * pi * t * t + 1.0);
    case LinkKind::oscsine: return 4.0 * (t + 1.0) * std::sin(4.0 * pi * t * t);
    case LinkKind::custom:
      if (!link.custom) throw std::invalid_argument("link_eval: custom link without a function");
      return link.custom(t);
  }
  return 0.0;
}

inline double LinkFunction::operator()(double t) const { return link_eval(*this, t); }

inline LinkFunction parse_link(const std::string& name) {
  if (name == "hardsine") return LinkFunction::hardsine();
  if (name == "oscsine") return LinkFunction::oscsine();
  throw InvalidConfig("unknown link function '" + name + "'");
}

struct ExperimentConfig {
  std::string preset = "custom";
  std::size_t n = 100;
  std::size_t d = 2;
  Vector theta{std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
  LinkFunction link = LinkFunction::hardsine();
  double rsnr = 5.0;
  std::size_t replications = 100;
  TemperatureGrid temperatures;
  Vector fixed_temperatures{0.1, 0.5, 0.7, 1.0, 1.5, 2.0};
  double erm_temperature = 30.0;
  Vector smoothness{1.0, 2.0, 3.0, 4.0};
  Vector radius{0.1, 0.5, 1.0, 1.5};
  int degree = 5;
  double s_min = 1.0;
  double train_fraction = 0.75;
  std::optional<double> noise_bound;  // empty: the simulated noise level sigma
  std::optional<double> truncation;   // empty: data-driven
  std::uint64_t seed = 1;
  std::size_t test_points = 10000;
  unsigned threads = 1;

  void validate() const {
    if (d < 2) throw InvalidConfig("ExperimentConfig: d must be >= 2");
    if (theta.size() != d) throw InvalidConfig("ExperimentConfig: theta has wrong dimension");
    if (std::abs(norm2(theta) - 1.0) > 1e-9) throw InvalidConfig("ExperimentConfig: theta not unit-norm");
    if (theta.back() < 0.0) throw InvalidConfig("ExperimentConfig: theta_d must be >= 0");
    if (!(rsnr > 0.0)) throw InvalidConfig("ExperimentConfig: rsnr must be > 0");
    if (n < 8) throw InvalidConfig("ExperimentConfig: n must be >= 8");
    if (test_points == 0) throw InvalidConfig("ExperimentConfig: test_points must be >= 1");
    if (fixed_temperatures.empty()) throw InvalidConfig("ExperimentConfig: no fixed temperatures");
    for (double t : fixed_temperatures) {
      if (!(t > 0.0)) throw InvalidConfig("ExperimentConfig: temperatures must be > 0");
    }
    if (!(erm_temperature > 0.0)) throw InvalidConfig("ExperimentConfig: ERM temperature must be > 0");
    temperatures.validate();
  }

  [[nodiscard]] PipelineConfig pipeline(double sigma, std::uint64_t split_seed) const {
    PipelineConfig p;
    p.grid.smoothness_values = smoothness;
    p.grid.radius_values = radius;
    p.degree = degree;
    p.noise_bound = noise_bound.value_or(sigma);
    p.truncation = truncation;
    p.s_min = s_min;
    p.split.train_fraction = train_fraction;
    p.split.seed = split_seed;
    p.temperatures = temperatures;
    return p;
  }
};

inline Vector normalized(Vector v) {
  const double nv = norm2(v);
  for (double& x : v) x /= nv;
  return v;
}

// Single-index directions of the three hardsine tables.
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.link = LinkFunction::hardsine();
  if (name == "table1") {
    c.d = 2;
    c.theta = normalized({1.0, 1.0});
  } else if (name == "table2") {
    c.d = 3;
    c.theta = normalized({2.0, 1.0, 3.0});
  } else if (name == "table3") {
    c.d = 4;
    c.theta = normalized({1.0, -2.0, 0.0, 4.0});
  } else {
    throw InvalidConfig("unknown preset '" + name + "'");
  }
  return c;
}

struct TruthRecord {
  Vector theta;
  LinkFunction link;
  double sigma = 0.0;
  Vector signal;  // noiseless g(X_i)

  [[nodiscard]] double operator()(std::span<const double> x) const { return link(dot(theta, x)); }
};

struct Dataset {
  RegressionSample sample{1};
  TruthRecord truth;
};

// Uniform design on [-1, 1]^d.
inline RegressionSample uniform_design(std::size_t n, std::size_t d, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> xs(n * d);
  for (double& x : xs) x = unif(rng);
  return RegressionSample(d, std::move(xs), std::vector<double>(n, 0.0));
}

// Y_i = f(theta'X_i) + sigma eps_i with sigma^2 = sum_i f(theta'X_i)^2 / (n rsnr).
inline Dataset gen_dataset(const ExperimentConfig& cfg, Rng& rng) {
  if (cfg.theta.size() != cfg.d) throw InvalidConfig("gen_dataset: theta has wrong dimension");
  if (!(cfg.rsnr > 0.0)) throw InvalidConfig("gen_dataset: rsnr must be > 0");
  const RegressionSample design = uniform_design(cfg.n, cfg.d, rng);
  TruthRecord truth{cfg.theta, cfg.link, 0.0, Vector(cfg.n)};
  double ss = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    truth.signal[i] = truth(design.x(i));
    ss += truth.signal[i] * truth.signal[i];
  }
  if (!(ss > 0.0)) throw DegenerateSignal("gen_dataset: the noiseless signal is identically zero");
  truth.sigma = std::sqrt(ss / (static_cast<double>(cfg.n) * cfg.rsnr));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> ys(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) ys[i] = truth.signal[i] + truth.sigma * gauss(rng);
  std::vector<double> xs(design.flat_xs().begin(), design.flat_xs().end());
  return {RegressionSample(cfg.d, std::move(xs), std::move(ys)), std::move(truth)};
}

// (1/N) sum_k (predictor(x_k) - g(x_k))^2 over fresh design draws.
template <class Predictor, class Sampler>
double mise(const Predictor& predictor, const TruthRecord& truth, Sampler&& sampler, std::size_t n_draws,
            Rng& rng) {
  if (n_draws == 0) throw std::invalid_argument("mise: need at least one draw");
  double s = 0.0;
  for (std::size_t k = 0; k < n_draws; ++k) {
    const Vector x = sampler(rng);
    const double e = predictor(std::span<const double>(x)) - truth(x);
    s += e * e;
  }
  return s / static_cast<double>(n_draws);
}

template <class Predictor>
double mise(const Predictor& predictor, const TruthRecord& truth, std::size_t n_draws, Rng& rng) {
  const std::size_t d = truth.theta.size();
  auto sampler = [d](Rng& r) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Vector x(d);
    for (double& v : x) v = unif(r);
    return x;
  };
  return mise(predictor, truth, sampler, n_draws, rng);
}

// ---------------------------------------------------------------------------
// Replication harness

struct ReplicationRow {
  std::size_t replication = 0;
  std::uint64_t data_seed = 0;
  Vector mise_fixed;         // one per fixed temperature
  double mise_erm = 0.0;     // aggregate at the large ERM temperature
  double mise_erm_exact = 0.0;
  double mise_best_member = 0.0;  // min over the dictionary, same test set
  double mise_cvt = 0.0;
  double cv_temperature = 0.0;
  double sigma = 0.0;
  double truncation = 0.0;
  std::size_t members = 0;
  std::size_t preselect_iterations = 0;
  Vector top_direction;
  std::string error;  // non-empty: the replication failed

  [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicationRow> rows;
  CvMode cv_mode = CvMode::exact_loo;
  double wall_seconds = 0.0;

  // Column order: fixed temperatures, ERM, aggCVT.
  [[nodiscard]] std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    for (double t : config.fixed_temperatures) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "T=%.1f", t);
      names.emplace_back(buf);
    }
    names.emplace_back("ERM");
    names.emplace_back("aggCVT");
    return names;
  }

  [[nodiscard]] static Vector row_columns(const ReplicationRow& r) {
    Vector v = r.mise_fixed;
    v.push_back(r.mise_erm);
    v.push_back(r.mise_cvt);
    return v;
  }

  [[nodiscard]] std::size_t succeeded() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(),
                                                  [](const auto& r) { return r.ok(); }));
  }

  // Means over successful replications, in column order.
  [[nodiscard]] Vector means() const {
    const std::size_t nc = config.fixed_temperatures.size() + 2;
    Vector m(nc, std::numeric_limits<double>::quiet_NaN());
    const std::size_t k = succeeded();
    if (k == 0) return m;
    std::fill(m.begin(), m.end(), 0.0);
    for (const auto& r : rows) {
      if (!r.ok()) continue;
      const Vector c = row_columns(r);
      for (std::size_t j = 0; j < nc; ++j) m[j] += c[j];
    }
    for (double& v : m) v /= static_cast<double>(k);
    return m;
  }

  // Unbiased standard deviations; NaN with fewer than two replications.
  [[nodiscard]] Vector sds() const {
    const std::size_t nc = config.fixed_temperatures.size() + 2;
    Vector s(nc, std::numeric_limits<double>::quiet_NaN());
    const std::size_t k = succeeded();
    if (k < 2) return s;
    const Vector m = means();
    std::fill(s.begin(), s.end(), 0.0);
    for (const auto& r : rows) {
      if (!r.ok()) continue;
      const Vector c = row_columns(r);
      for (std::size_t j = 0; j < nc; ++j) s[j] += (c[j] - m[j]) * (c[j] - m[j]);
    }
    for (double& v : s) v = std::sqrt(v / static_cast<double>(k - 1));
    return s;
  }

  [[nodiscard]] double mean_cv_temperature() const {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& r : rows) {
      if (r.ok()) {
        s += r.cv_temperature;
        ++k;
      }
    }
    return k ? s / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
  }
};

namespace detail {

inline double mise_from_values(std::span<const double> weights, std::span<const double> values,
                               std::span<const double> truth, std::size_t np) {
  double s = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    double pred = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) pred += weights[k] * values[k * np + p];
    const double e = pred - truth[p];
    s += e * e;
  }
  return s / static_cast<double>(np);
}

}  // namespace detail

// One replication: dataset, split, preselection, dictionary, then the MISE
// of every column from a shared table of member values at the test points.
inline ReplicationRow run_replication(const ExperimentConfig& cfg, std::size_t rep) {
  ReplicationRow row;
  row.replication = rep;
  row.data_seed = derive_seed(cfg.seed, 3 * rep);
  Rng data_rng(row.data_seed);
  Rng test_rng = make_rng(cfg.seed, 3 * rep + 1);
  const std::uint64_t split_seed = derive_seed(cfg.seed, 3 * rep + 2);

  Dataset ds = gen_dataset(cfg, data_rng);
  row.sigma = ds.truth.sigma;
  PipelineConfig pc = cfg.pipeline(ds.truth.sigma, split_seed);
  pc.validate();
  SplitResult parts = split(ds.sample, pc.split);
  std::optional<PreselectResult> trace;
  auto dirs = pipeline_directions(parts.training, parts.learning, pc, cfg.n, trace);
  row.preselect_iterations = trace ? trace->iterations : 0;
  const Dictionary dict = fit_dictionary(parts.training, parts.learning, std::move(dirs), pc);
  row.truncation = dict.truncation;
  row.members = dict.size();

  const RegressionSample test = uniform_design(cfg.test_points, cfg.d, test_rng);
  Vector truth(cfg.test_points);
  for (std::size_t p = 0; p < cfg.test_points; ++p) truth[p] = ds.truth(test.x(p));
  const Vector values = member_values(dict, test);

  auto mise_at = [&](double t) {
    return detail::mise_from_values(gibbs_weights(dict.risks, t), values, truth, cfg.test_points);
  };
  for (double t : cfg.fixed_temperatures) row.mise_fixed.push_back(mise_at(t));
  row.mise_erm = mise_at(cfg.erm_temperature);
  {
    Vector onehot(dict.size(), 0.0);
    onehot[erm_select(dict.risks)] = 1.0;
    row.mise_erm_exact = detail::mise_from_values(onehot, values, truth, cfg.test_points);
  }
  row.mise_best_member = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dict.size(); ++k) {
    double s = 0.0;
    for (std::size_t p = 0; p < cfg.test_points; ++p) {
      const double e = values[k * cfg.test_points + p] - truth[p];
      s += e * e;
    }
    row.mise_best_member = std::min(row.mise_best_member, s / static_cast<double>(cfg.test_points));
  }
  const CvResult cv = cv_on_dictionary(dict, pc, cfg.n);
  row.cv_temperature = cv.temperature;
  row.mise_cvt = mise_at(cv.temperature);
  const Vector w = gibbs_weights(dict.risks, cv.temperature);
  const auto top = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
  row.top_direction = dict.directions[dict.member_direction[top]];
  return row;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = cfg;
  report.cv_mode = cfg.temperatures.mode_for(cfg.n);
  report.rows.resize(cfg.replications);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t r = next++; r < cfg.replications; r = next++) {
      try {
        report.rows[r] = run_replication(cfg, r);
      } catch (const std::exception& e) {
        ReplicationRow failed;
        failed.replication = r;
        failed.data_seed = derive_seed(cfg.seed, 3 * r);
        failed.error = e.what();
        report.rows[r] = std::move(failed);
      }
    }
  };
  const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(
                                                                              std::max<std::size_t>(cfg.replications, 1))));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace sidx
