// Regular lattice of the half unit-sphere {v : |v| = 1, v_d >= 0} built
// from nested spherical-coordinate angle grids, plus ball sections of it.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "sidx/core_data.hpp"

namespace sidx {

class SphereLattice {
 public:
  SphereLattice(std::size_t dim, double step) : dim_(dim), step_(step) {}

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] double step() const noexcept { return step_; }
  [[nodiscard]] std::size_t size() const noexcept { return dim_ ? coords_.size() / dim_ : 0; }
  [[nodiscard]] bool empty() const noexcept { return coords_.empty(); }

  [[nodiscard]] std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  [[nodiscard]] Vector point_vector(std::size_t i) const {
    auto p = point(i);
    return {p.begin(), p.end()};
  }
  [[nodiscard]] std::vector<Vector> points() const {
    std::vector<Vector> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(point_vector(i));
    return out;
  }

  void push_back(std::span<const double> p) {
    if (p.size() != dim_) throw std::invalid_argument("SphereLattice: wrong point dimension");
    coords_.insert(coords_.end(), p.begin(), p.end());
  }

  friend bool operator==(const SphereLattice&, const SphereLattice&) = default;

 private:
  std::size_t dim_;
  double step_;
  std::vector<double> coords_;
};

// Discretization step (n ln n)^(-1/(2 s_min)).
inline double lattice_step(double n, double s_min) {
  if (!(n > 1.0)) throw std::invalid_argument("lattice_step: need n > 1");
  if (!(s_min > 0.0)) throw std::invalid_argument("lattice_step: need s_min > 0");
  return std::pow(n * std::log(n), -1.0 / (2.0 * s_min));
}

// p(phi_1, ..., phi_{d-1}):
//   x_1 = cos(phi_1) prod_{j>=2} cos(phi_j)
//   x_l = sin(phi_{l-1}) prod_{j>=l} cos(phi_j)
//   x_d = sin(phi_{d-1})
inline Vector spherical_point(std::span<const double> angles) {
  const std::size_t d = angles.size() + 1;
  Vector x(d);
  double prod = 1.0;
  for (std::size_t l = d; l >= 2; --l) {
    x[l - 1] = std::sin(angles[l - 2]) * prod;
    prod *= std::cos(angles[l - 2]);
  }
  x[0] = prod;
  return x;
}

namespace detail {

// Points closer than `tol` to an already accepted point are dropped. Cells
// of width tol put any such pair in adjacent cells.
class PointDeduplicator {
 public:
  PointDeduplicator(std::size_t dim, double tol) : dim_(dim), tol_(tol) {}

  bool accept(std::span<const double> p, const SphereLattice& kept) {
    std::vector<std::int64_t> cell(dim_);
    for (std::size_t i = 0; i < dim_; ++i) cell[i] = static_cast<std::int64_t>(std::floor(p[i] / tol_));
    std::vector<std::int64_t> probe(dim_);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < dim_; ++i) combos *= 3;
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t code = c;
      for (std::size_t i = 0; i < dim_; ++i) {
        probe[i] = cell[i] + static_cast<std::int64_t>(code % 3) - 1;
        code /= 3;
      }
      auto it = buckets_.find(hash(probe));
      if (it == buckets_.end()) continue;
      for (std::size_t idx : it->second) {
        if (distance(kept.point(idx), p) < tol_) return false;
      }
    }
    buckets_[hash(cell)].push_back(kept.size());
    return true;
  }

 private:
  static std::uint64_t hash(const std::vector<std::int64_t>& key) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (std::int64_t k : key) h = splitmix64(h ^ static_cast<std::uint64_t>(k));
    return h;
  }

  std::size_t dim_;
  double tol_;
  // Collisions of the 64-bit cell hash only cost extra distance checks.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

struct LatticeBuilder {
  std::size_t dim;
  double step;
  std::span<const double> center;  // empty: no pruning
  double radius;
  SphereLattice out;
  PointDeduplicator dedup;
  std::vector<double> angles;

  LatticeBuilder(std::size_t d, double delta, std::span<const double> c, double r)
      : dim(d), step(delta), center(c), radius(r), out(d, delta), dedup(d, delta / 8.0),
        angles(d - 1, 0.0) {}

  static std::vector<double> angle_set(double delta) {
    constexpr double pi = std::numbers::pi;
    const auto count = static_cast<std::size_t>(std::floor(pi / delta + 1e-9)) + 1;
    std::vector<double> phis(count);
    for (std::size_t l = 0; l < count; ++l) phis[l] = std::min(pi, static_cast<double>(l) * delta);
    return phis;
  }

  // level k chooses phi_k (1-based); `prod` = prod_{j>k} cos(phi_j);
  // `partial` = squared distance to the center over coordinates x_{k+2..d}.
  void run(std::size_t k, double prod, double partial) {
    constexpr double pi = std::numbers::pi;
    const double r2 = radius * radius;
    double delta_k = 0.0;
    if (k == dim - 1) {
      delta_k = std::acos(1.0 - step * step / 2.0);
    } else {
      delta_k = step / std::max(std::abs(prod), step / pi);
    }
    for (double phi : angle_set(delta_k)) {
      angles[k - 1] = phi;
      double xk1 = std::sin(phi) * prod;  // x_{k+1}
      if (k == dim - 1 && xk1 < 0.0 && xk1 >= -1e-12) xk1 = 0.0;
      double part = partial;
      if (!center.empty()) {
        const double t = xk1 - center[k];
        part += t * t;
        if (part > r2) continue;
      }
      const double next_prod = prod * std::cos(phi);
      if (k == 1) {
        Vector x = spherical_point(angles);
        if (x[dim - 1] < 0.0 && x[dim - 1] >= -1e-12) x[dim - 1] = 0.0;
        if (!center.empty() && distance(x, center) > radius) continue;
        if (dedup.accept(x, out)) out.push_back(x);
      } else {
        run(k - 1, next_prod, part);
      }
    }
  }
};

}  // namespace detail

inline SphereLattice build_lattice(std::size_t d, double delta) {
  if (d < 2) throw std::invalid_argument("build_lattice: dimension must be >= 2");
  if (!(delta > 0.0) || delta > 2.0) throw std::invalid_argument("build_lattice: step must lie in (0, 2]");
  detail::LatticeBuilder b(d, delta, {}, std::numeric_limits<double>::infinity());
  b.run(d - 1, 1.0, 0.0);
  return std::move(b.out);
}

// Points of the step-delta lattice within `radius` of `center`, generated
// with angle-level pruning instead of materializing the whole lattice.
// Deduplication runs over the ball enlarged by delta/8 so the result
// matches lattice_section(build_lattice(d, delta), center, radius) up to
// near-duplicate boundary cases.
inline SphereLattice build_lattice_section(std::size_t d, double delta,
                                           std::span<const double> center, double radius) {
  if (d < 2) throw std::invalid_argument("build_lattice_section: dimension must be >= 2");
  if (!(delta > 0.0) || delta > 2.0) {
    throw std::invalid_argument("build_lattice_section: step must lie in (0, 2]");
  }
  if (center.size() != d) throw std::invalid_argument("build_lattice_section: center dimension");
  detail::LatticeBuilder b(d, delta, center, radius + delta / 8.0);
  b.run(d - 1, 1.0, 0.0);
  SphereLattice out(d, delta);
  for (std::size_t i = 0; i < b.out.size(); ++i) {
    if (distance(b.out.point(i), center) <= radius) out.push_back(b.out.point(i));
  }
  return out;
}

inline SphereLattice lattice_section(const SphereLattice& lat, std::span<const double> center,
                                     double radius) {
  if (center.size() != lat.dim()) throw std::invalid_argument("lattice_section: center dimension");
  if (std::abs(norm2(center) - 1.0) > 1e-9) {
    throw std::invalid_argument("lattice_section: center is not unit-norm");
  }
  SphereLattice out(lat.dim(), lat.step());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (distance(lat.point(i), center) <= radius) out.push_back(lat.point(i));
  }
  return out;
}

inline std::size_t nearest_point(const SphereLattice& lat, std::span<const double> v) {
  if (lat.empty()) throw std::invalid_argument("nearest_point: empty lattice");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const double dd = distance(lat.point(i), v);
    if (dd < best_d) {
      best_d = dd;
      best = i;
    }
  }
  return best;
}

}  // namespace sidx
