// Datasets, projections, sample splitting, parameter grids and seeded
// randomness shared by the estimator and the simulation bench.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sidx {

using Vector = std::vector<double>;

// Error categories. All derive from the standard hierarchy so callers can
// catch std::invalid_argument / std::runtime_error generically.
struct InvalidSplit : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateSignal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return std::sqrt(s);
}

// Design points are stored row-major in one flat buffer.
class RegressionSample {
 public:
  explicit RegressionSample(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("RegressionSample: d must be >= 1");
  }

  RegressionSample(std::size_t dim, std::vector<double> xs, std::vector<double> ys)
      : dim_(dim), xs_(std::move(xs)), ys_(std::move(ys)) {
    if (dim == 0) throw std::invalid_argument("RegressionSample: d must be >= 1");
    if (xs_.size() != ys_.size() * dim_) {
      throw std::invalid_argument("RegressionSample: |xs| != |ys| * d");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return ys_.size(); }
  [[nodiscard]] bool empty() const noexcept { return ys_.empty(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

  [[nodiscard]] std::span<const double> x(std::size_t i) const {
    return {xs_.data() + i * dim_, dim_};
  }
  [[nodiscard]] double y(std::size_t i) const { return ys_[i]; }
  [[nodiscard]] std::span<const double> ys() const noexcept { return ys_; }
  [[nodiscard]] std::span<const double> flat_xs() const noexcept { return xs_; }

  void push_back(std::span<const double> x, double y) {
    if (x.size() != dim_) throw std::invalid_argument("RegressionSample: point has wrong dimension");
    xs_.insert(xs_.end(), x.begin(), x.end());
    ys_.push_back(y);
  }

  [[nodiscard]] RegressionSample subset(std::span<const std::size_t> idx) const {
    RegressionSample out(dim_);
    out.xs_.reserve(idx.size() * dim_);
    out.ys_.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(x(i), y(i));
    return out;
  }

  [[nodiscard]] RegressionSample without(std::size_t skip) const {
    RegressionSample out(dim_);
    for (std::size_t i = 0; i < size(); ++i) {
      if (i != skip) out.push_back(x(i), y(i));
    }
    return out;
  }

  [[nodiscard]] double max_abs_response() const noexcept {
    double q = 0.0;
    for (double v : ys_) q = std::max(q, std::abs(v));
    return q;
  }

 private:
  std::size_t dim_;
  std::vector<double> xs_;
  std::vector<double> ys_;
};

// Scalar sample (v'X_i, Y_i) in the original order of the source sample.
struct ProjectedSample {
  Vector zs;
  Vector ys;
  Vector direction;

  [[nodiscard]] std::size_t size() const noexcept { return zs.size(); }
};

inline ProjectedSample project_unchecked(const RegressionSample& sample,
                                         std::span<const double> v) {
  if (v.size() != sample.dim()) {
    throw std::invalid_argument("project: direction dimension does not match sample");
  }
  ProjectedSample out;
  out.direction.assign(v.begin(), v.end());
  out.zs.resize(sample.size());
  out.ys.assign(sample.ys().begin(), sample.ys().end());
  for (std::size_t i = 0; i < sample.size(); ++i) out.zs[i] = dot(v, sample.x(i));
  return out;
}

inline ProjectedSample project(const RegressionSample& sample, std::span<const double> v) {
  if (v.size() != sample.dim()) {
    throw std::invalid_argument("project: direction dimension does not match sample");
  }
  if (sample.empty()) throw std::invalid_argument("project: empty sample");
  if (std::abs(norm2(v) - 1.0) > 1e-9) {
    throw std::invalid_argument("project: direction is not unit-norm");
  }
  return project_unchecked(sample, v);
}

// ---------------------------------------------------------------------------
// Seeds and random streams

// splitmix64 finalizer. Stream k of root seed r is seeded with
// mix(r + (k + 1) * golden), so streams are independent of evaluation order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return splitmix64(root + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::uint64_t stream) {
  return Rng(derive_seed(root, stream));
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitMode { fraction, schedule };

struct SplitConfig {
  SplitMode mode = SplitMode::fraction;
  double train_fraction = 0.75;
  double schedule_alpha = 1.0;
  std::uint64_t seed = 0;
};

// Size m of the training part. The learning part has n - m points.
inline std::size_t training_size(std::size_t n, const SplitConfig& cfg) {
  if (n < 4) throw InvalidSplit("split: need at least 4 observations");
  const double nd = static_cast<double>(n);
  double m = 0.0;
  if (cfg.mode == SplitMode::fraction) {
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
      throw InvalidSplit("split: train_fraction must lie in (0,1)");
    }
    // Guard against 0.75 * 100 = 75.00000000000001 style rounding.
    m = std::ceil(cfg.train_fraction * nd - 1e-9);
  } else {
    if (!(cfg.schedule_alpha > 0.0)) throw InvalidSplit("split: schedule_alpha must be > 0");
    m = std::floor(nd * (1.0 - std::pow(std::log(nd), -cfg.schedule_alpha)));
  }
  if (m < 1.0 || m >= nd) throw InvalidSplit("split: empty training or learning part");
  return static_cast<std::size_t>(m);
}

struct SplitResult {
  RegressionSample training;
  RegressionSample learning;
  std::vector<std::size_t> training_idx;  // ascending indices into the source
  std::vector<std::size_t> learning_idx;  // ascending indices into the source
};

// Fisher-Yates shuffle of 0..n-1 driven by the split seed; the first m
// shuffled indices form the training part.
inline SplitResult split(const RegressionSample& sample, const SplitConfig& cfg) {
  const std::size_t n = sample.size();
  const std::size_t m = training_size(n, cfg);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, 0x5b1d));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
  std::vector<std::size_t> le(perm.begin() + static_cast<std::ptrdiff_t>(m), perm.end());
  std::sort(tr.begin(), tr.end());
  std::sort(le.begin(), le.end());
  auto training = sample.subset(tr);
  auto learning = sample.subset(le);
  return {std::move(training), std::move(learning), std::move(tr), std::move(le)};
}

// ---------------------------------------------------------------------------
// Grids

// Arithmetic smoothness grid s_min, s_min + 1/ln n, ... capped at s_max,
// with s_max appended when it is not already the last element.
inline Vector smoothness_grid(double s_min, double s_max, double n) {
  if (!(s_min > 0.0) || !(s_max >= s_min)) {
    throw std::invalid_argument("smoothness_grid: need 0 < s_min <= s_max");
  }
  if (!(n > 1.0)) throw std::invalid_argument("smoothness_grid: need n > 1");
  const double step = 1.0 / std::log(n);
  Vector g;
  for (std::size_t k = 0;; ++k) {
    const double s = s_min + static_cast<double>(k) * step;
    if (s > s_max + 1e-12) break;
    g.push_back(std::min(s, s_max));
  }
  if (std::abs(g.back() - s_max) > 1e-12) g.push_back(s_max);
  return g;
}

// Parameter dictionary description. An empty direction list asks the
// pipeline to run the preselection over the half-sphere lattice.
struct ParamGrid {
  Vector smoothness_values{1.0, 2.0, 3.0, 4.0};
  Vector radius_values{0.1, 0.5, 1.0, 1.5};
  std::vector<Vector> directions;

  void validate() const {
    if (smoothness_values.empty()) throw InvalidConfig("ParamGrid: empty smoothness grid");
    if (radius_values.empty()) throw InvalidConfig("ParamGrid: empty radius grid");
    for (std::size_t i = 0; i < smoothness_values.size(); ++i) {
      if (!(smoothness_values[i] > 0.0)) throw InvalidConfig("ParamGrid: smoothness must be > 0");
      if (i > 0 && !(smoothness_values[i] > smoothness_values[i - 1])) {
        throw InvalidConfig("ParamGrid: smoothness grid must be strictly increasing");
      }
    }
    for (double l : radius_values) {
      if (!(l > 0.0)) throw InvalidConfig("ParamGrid: radius must be > 0");
    }
    for (const auto& v : directions) {
      if (std::abs(norm2(v) - 1.0) > 1e-9) throw InvalidConfig("ParamGrid: direction not unit-norm");
    }
  }
};

// ---------------------------------------------------------------------------
// CSV input: header row optional, columns x_1..x_d,y.

inline RegressionSample read_csv_sample(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  RegressionSample out(dim);
  std::string line;
  std::size_t lineno = 0;
  Vector row;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    row.clear();
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (header_allowed) {  // one header line before any data
        header_allowed = false;
        continue;
      }
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (row.size() != dim + 1) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(dim + 1) + " columns, got " +
                               std::to_string(row.size()));
    }
    header_allowed = false;
    out.push_back(std::span<const double>(row.data(), dim), row[dim]);
  }
  return out;
}

}  // namespace sidx
