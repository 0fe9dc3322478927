// Univariate local polynomial estimation with the bias/variance balancing
// bandwidth and sup-norm truncation. This is the weak learner of the
// aggregate.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sidx/core_data.hpp"

namespace sidx {

struct LpeConfig {
  int degree = 5;            // r
  double smoothness = 1.0;   // s
  double radius = 1.0;       // L
  double noise_bound = 1.0;  // sigma_1
  // Truncation level Q. Empty means data-driven: max |Y_i| of the training sample.
  std::optional<double> truncation;
  double degeneracy_tol = 1e-10;

  static constexpr int max_degree = 10;

  void validate() const {
    if (degree < 0 || degree > max_degree) throw InvalidConfig("LpeConfig: degree out of range");
    if (!(smoothness > 0.0)) throw InvalidConfig("LpeConfig: smoothness must be > 0");
    if (static_cast<double>(degree) + 1.0 < smoothness) {
      throw InvalidConfig("LpeConfig: degree + 1 must be >= smoothness");
    }
    if (!(radius > 0.0)) throw InvalidConfig("LpeConfig: radius must be > 0");
    if (!(noise_bound > 0.0)) throw InvalidConfig("LpeConfig: noise_bound must be > 0");
    if (truncation && !(*truncation > 0.0)) throw InvalidConfig("LpeConfig: truncation must be > 0");
    if (!(degeneracy_tol > 0.0)) throw InvalidConfig("LpeConfig: degeneracy_tol must be > 0");
  }
};

struct LocalFit {
  double value = 0.0;
  double bandwidth = 1.0;
  bool degenerate = false;
  double min_eigenvalue = 0.0;
  bool clamped = false;       // no feasible bandwidth below 1
  std::size_t window_count = 0;
};

struct Bandwidth {
  double h = 1.0;
  bool clamped = false;
};

inline double truncate(double value, double q) {
  return std::max(-q, std::min(q, value));
}

// Fraction of the points of `zs` (sorted ascending) in the closed interval
// [center - halfwidth, center + halfwidth].
inline double empirical_measure(std::span<const double> zs, double center, double halfwidth) {
  if (zs.empty()) throw std::invalid_argument("empirical_measure: empty sample");
  auto lo = std::partition_point(zs.begin(), zs.end(),
                                 [&](double z) { return z < center && center - z > halfwidth; });
  auto hi = std::partition_point(lo, zs.end(),
                                 [&](double z) { return z <= center || z - center <= halfwidth; });
  return static_cast<double>(hi - lo) / static_cast<double>(zs.size());
}

// t_k: smallest h with L h^s >= sigma_1 / sqrt(k) at window count k.
inline double bandwidth_threshold(std::size_t count, const LpeConfig& cfg) {
  return std::pow(cfg.noise_bound / (cfg.radius * std::sqrt(static_cast<double>(count))),
                  1.0 / cfg.smoothness);
}

namespace detail {

inline constexpr std::size_t no_skip = std::numeric_limits<std::size_t>::max();

// Walks the order statistics of |zs[i] - z| outward from z. On the segment
// [d_(k), d_(k+1)) the window count is k, so the first feasible segment
// yields max(d_(k), t_k) as the minimal bandwidth.
template <class Threshold>
Bandwidth scan_bandwidth(std::span<const double> zs, double z, Threshold&& threshold,
                         std::size_t skip = no_skip) {
  const auto pos = static_cast<std::ptrdiff_t>(
      std::lower_bound(zs.begin(), zs.end(), z) - zs.begin());
  std::ptrdiff_t left = pos - 1;
  std::ptrdiff_t right = pos;
  const auto n = static_cast<std::ptrdiff_t>(zs.size());
  const auto skip_i = static_cast<std::ptrdiff_t>(skip);
  constexpr double inf = std::numeric_limits<double>::infinity();

  auto peek = [&]() -> double {
    if (left == skip_i) --left;
    if (right == skip_i) ++right;
    const double dl = left >= 0 ? z - zs[static_cast<std::size_t>(left)] : inf;
    const double dr = right < n ? zs[static_cast<std::size_t>(right)] - z : inf;
    return std::min(dl, dr);
  };
  auto consume = [&]() {
    const double dl = left >= 0 ? z - zs[static_cast<std::size_t>(left)] : inf;
    const double dr = right < n ? zs[static_cast<std::size_t>(right)] - z : inf;
    if (dl <= dr) {
      --left;
    } else {
      ++right;
    }
  };

  std::size_t k = 0;
  double dk = 0.0;
  double next = peek();
  for (;;) {
    if (k > 0) {
      const double cand = std::max(dk, threshold(k));
      if (cand < std::min(next, 1.0)) return {cand, false};
    }
    if (next >= 1.0) return {1.0, true};
    consume();
    ++k;
    dk = next;
    next = peek();
  }
}

// Normal equations of the windowed least-squares problem in the scaled
// monomial basis ((Z_i - z)/h)^a.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int degree) : degree_(degree) {
    moments_.fill(0.0);
    rhs_.fill(0.0);
  }

  void add(double u, double y) {
    double p = 1.0;
    for (int a = 0; a <= degree_; ++a) {
      moments_[static_cast<std::size_t>(a)] += p;
      rhs_[static_cast<std::size_t>(a)] += y * p;
      p *= u;
    }
    for (int a = degree_ + 1; a <= 2 * degree_; ++a) {
      moments_[static_cast<std::size_t>(a)] += p;
      p *= u;
    }
    ++count_;
  }

  // Two points at once; the interleaved power chains hide multiply latency.
  void add_pair(double u1, double y1, double u2, double y2) {
    double p1 = 1.0;
    double p2 = 1.0;
    for (int a = 0; a <= degree_; ++a) {
      moments_[static_cast<std::size_t>(a)] += p1 + p2;
      rhs_[static_cast<std::size_t>(a)] += y1 * p1 + y2 * p2;
      p1 *= u1;
      p2 *= u2;
    }
    for (int a = degree_ + 1; a <= 2 * degree_; ++a) {
      moments_[static_cast<std::size_t>(a)] += p1 + p2;
      p1 *= u1;
      p2 *= u2;
    }
    count_ += 2;
  }

  [[nodiscard]] std::size_t count() const noexcept { return count_; }

  // Solves the normal equations by Cholesky factorization of the scaled
  // moment matrix M. M is degenerate when its smallest eigenvalue is at most
  // tol * trace(M) / (r + 1). Since 1 / trace(M^-1) bounds that eigenvalue
  // from below, the symmetric eigenproblem is only solved when the bound is
  // inconclusive or when `exact_eigenvalue` asks for the diagnostic;
  // otherwise min_eigenvalue holds the lower bound.
  void solve(double degeneracy_tol, LocalFit& fit, bool exact_eigenvalue = true) const {
    constexpr int cap = LpeConfig::max_degree + 1;
    fit.window_count = count_;
    fit.value = 0.0;
    fit.degenerate = true;
    fit.min_eigenvalue = 0.0;
    if (count_ == 0) return;
    const int p = degree_ + 1;
    const double inv = 1.0 / static_cast<double>(count_);
    double m[cap][cap];
    double b[cap];
    double trace = 0.0;
    for (int a = 0; a < p; ++a) {
      b[a] = rhs_[static_cast<std::size_t>(a)] * inv;
      for (int c = 0; c < p; ++c) m[a][c] = moments_[static_cast<std::size_t>(a + c)] * inv;
      trace += m[a][a];
    }
    const double threshold = degeneracy_tol * trace / static_cast<double>(p);

    double l[cap][cap];
    bool factored = true;
    for (int j = 0; j < p && factored; ++j) {
      double diag = m[j][j];
      for (int k = 0; k < j; ++k) diag -= l[j][k] * l[j][k];
      if (!(diag > 0.0)) {
        factored = false;
        break;
      }
      l[j][j] = std::sqrt(diag);
      for (int i = j + 1; i < p; ++i) {
        double v = m[i][j];
        for (int k = 0; k < j; ++k) v -= l[i][k] * l[j][k];
        l[i][j] = v / l[j][j];
      }
    }
    double bound = 0.0;
    if (factored) {
      // trace(M^-1) = |L^-1|_F^2, L^-1 by forward substitution.
      double x[cap][cap];
      double tr = 0.0;
      for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
          double v = i == j ? 1.0 : 0.0;
          for (int k = j; k < i; ++k) v -= l[i][k] * x[k][j];
          x[i][j] = v / l[i][i];
          tr += x[i][j] * x[i][j];
        }
      }
      bound = 1.0 / tr;
    }
    double min_eig = bound;
    // A breakdown of the factorization means lambda_min <= O(p eps trace),
    // which is decisive whenever the threshold sits well above that level.
    const bool breakdown_decisive =
        !factored && threshold > 64.0 * p * std::numeric_limits<double>::epsilon() * trace;
    if (breakdown_decisive && !exact_eigenvalue) return;
    if (exact_eigenvalue || !(factored && bound > threshold)) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, cap, cap> em(p, p);
      for (int a = 0; a < p; ++a) {
        for (int c = 0; c < p; ++c) em(a, c) = m[a][c];
      }
      Eigen::SelfAdjointEigenSolver<decltype(em)> es(
          em, factored ? Eigen::EigenvaluesOnly : Eigen::ComputeEigenvectors);
      min_eig = es.eigenvalues()(0);
      if (!factored && min_eig > threshold) {
        // Positive definite in exact arithmetic although the factorization
        // broke down: solve through the eigendecomposition.
        const auto& vecs = es.eigenvectors();
        const auto& ev = es.eigenvalues();
        double c0 = 0.0;
        for (int j = 0; j < p; ++j) {
          double proj = 0.0;
          for (int a = 0; a < p; ++a) proj += vecs(a, j) * b[a];
          c0 += vecs(0, j) * proj / ev(j);
        }
        fit.value = c0;
        fit.degenerate = false;
        fit.min_eigenvalue = min_eig;
        return;
      }
    }
    fit.min_eigenvalue = min_eig;
    if (!(min_eig > threshold)) return;
    double y[cap];
    for (int i = 0; i < p; ++i) {
      double v = b[i];
      for (int k = 0; k < i; ++k) v -= l[i][k] * y[k];
      y[i] = v / l[i][i];
    }
    double c[cap];
    for (int i = p - 1; i >= 0; --i) {
      double v = y[i];
      for (int k = i + 1; k < p; ++k) v -= l[k][i] * c[k];
      c[i] = v / l[i][i];
    }
    fit.value = c[0];
    fit.degenerate = false;
  }

 private:
  int degree_;
  std::array<double, 2 * LpeConfig::max_degree + 1> moments_{};
  std::array<double, LpeConfig::max_degree + 1> rhs_{};
  std::size_t count_ = 0;
};

}  // namespace detail

// Bandwidth for the sample `zs` (sorted ascending) at z.
inline Bandwidth select_bandwidth(std::span<const double> zs, double z, const LpeConfig& cfg) {
  if (zs.empty()) throw std::invalid_argument("select_bandwidth: empty sample");
  return detail::scan_bandwidth(zs, z, [&](std::size_t k) { return bandwidth_threshold(k, cfg); });
}

// Local polynomial fit at z with fixed bandwidth h over the points with
// |Z_i - z| <= h. Order of `data` is irrelevant.
inline LocalFit fit_local_poly(const ProjectedSample& data, double z, double h,
                               const LpeConfig& cfg) {
  if (!(h > 0.0)) throw std::invalid_argument("fit_local_poly: bandwidth must be > 0");
  detail::MomentAccumulator acc(cfg.degree);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double dz = data.zs[i] - z;
    if (std::abs(dz) <= h) acc.add(dz / h, data.ys[i]);
  }
  LocalFit fit;
  fit.bandwidth = h;
  acc.solve(cfg.degeneracy_tol, fit);
  return fit;
}

// Projected training sample sorted by projection, shared by every
// estimator built on the same direction.
struct SortedProjection {
  Vector zs;
  Vector ys;
  std::vector<std::size_t> rank;  // rank[original index] = sorted position
  Vector direction;

  static SortedProjection from(const ProjectedSample& p) {
    const std::size_t n = p.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.zs[a] < p.zs[b]; });
    SortedProjection s;
    s.zs.resize(n);
    s.ys.resize(n);
    s.rank.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      s.zs[k] = p.zs[order[k]];
      s.ys[k] = p.ys[order[k]];
      s.rank[order[k]] = k;
    }
    s.direction = p.direction;
    return s;
  }

  [[nodiscard]] std::size_t size() const noexcept { return zs.size(); }
};

// Fitted univariate LPE with the data-driven bandwidth. Thresholds t_k are
// tabulated once per (s, L, sigma_1).
class LocalPolynomialEstimator {
 public:
  LocalPolynomialEstimator(std::shared_ptr<const SortedProjection> data, LpeConfig cfg)
      : data_(std::move(data)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!data_ || data_->size() == 0) throw std::invalid_argument("LPE: empty training data");
    thresholds_.resize(data_->size() + 1);
    thresholds_[0] = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < thresholds_.size(); ++k) thresholds_[k] = bandwidth_threshold(k, cfg_);
  }

  [[nodiscard]] const LpeConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const SortedProjection& data() const noexcept { return *data_; }

  [[nodiscard]] Bandwidth bandwidth(double z, std::size_t skip = detail::no_skip) const {
    return detail::scan_bandwidth(data_->zs, z, [&](std::size_t k) { return thresholds_[k]; },
                                  skip);
  }

  [[nodiscard]] LocalFit predict(double z) const { return predict_excluding(z, detail::no_skip); }

  // Prediction with the point at sorted position `skip` removed from the
  // training sample (leave-one-out refits).
  [[nodiscard]] LocalFit predict_excluding(double z, std::size_t skip) const {
    return predict_impl(z, skip, true);
  }

  // Same decision and value as predict(); min_eigenvalue may only be a
  // lower bound. Used on the hot paths of the aggregate.
  [[nodiscard]] LocalFit predict_fast(double z, std::size_t skip = detail::no_skip) const {
    return predict_impl(z, skip, false);
  }

  [[nodiscard]] LocalFit fit_window(double z, double h, std::size_t skip = detail::no_skip,
                                    bool exact_eigenvalue = true) const {
    const auto& zs = data_->zs;
    const auto& ys = data_->ys;
    const auto n = static_cast<std::ptrdiff_t>(zs.size());
    const auto pos = static_cast<std::ptrdiff_t>(
        std::lower_bound(zs.begin(), zs.end(), z) - zs.begin());
    std::ptrdiff_t lo = pos;
    while (lo > 0 && z - zs[static_cast<std::size_t>(lo - 1)] <= h) --lo;
    std::ptrdiff_t hi = pos;
    while (hi < n && zs[static_cast<std::size_t>(hi)] - z <= h) ++hi;
    detail::MomentAccumulator acc(cfg_.degree);
    const double inv_h = 1.0 / h;
    std::ptrdiff_t pending = -1;
    for (std::ptrdiff_t i = lo; i < hi; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (k == skip) continue;
      if (pending < 0) {
        pending = i;
        continue;
      }
      const auto j = static_cast<std::size_t>(pending);
      acc.add_pair((zs[j] - z) * inv_h, ys[j], (zs[k] - z) * inv_h, ys[k]);
      pending = -1;
    }
    if (pending >= 0) {
      const auto j = static_cast<std::size_t>(pending);
      acc.add((zs[j] - z) * inv_h, ys[j]);
    }
    LocalFit fit;
    fit.bandwidth = h;
    acc.solve(cfg_.degeneracy_tol, fit, exact_eigenvalue);
    return fit;
  }

 private:
  [[nodiscard]] LocalFit predict_impl(double z, std::size_t skip, bool exact_eigenvalue) const {
    const Bandwidth bw = bandwidth(z, skip);
    LocalFit fit = fit_window(z, bw.h, skip, exact_eigenvalue);
    fit.clamped = bw.clamped;
    return fit;
  }

  std::shared_ptr<const SortedProjection> data_;
  LpeConfig cfg_;
  std::vector<double> thresholds_;
};

// Bandwidth selection followed by the local fit at the chosen bandwidth.
inline LocalFit lpe_predict(const ProjectedSample& data, double z, const LpeConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("lpe_predict: empty sample");
  auto sorted = std::make_shared<const SortedProjection>(SortedProjection::from(data));
  return LocalPolynomialEstimator(std::move(sorted), cfg).predict(z);
}

}  // namespace sidx
