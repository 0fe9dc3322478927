#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "sidx/core_data.hpp"
#include "sidx/sphere_lattice.hpp"

using namespace sidx;

namespace {

RegressionSample random_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RegressionSample s(d);
  Vector x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x) v = u(rng);
    s.push_back(x, u(rng));
  }
  return s;
}

}  // namespace

TEST(RegressionSample, RejectsInconsistentShapes) {
  EXPECT_THROW(RegressionSample(0), std::invalid_argument);
  EXPECT_THROW(RegressionSample(2, {1.0, 2.0, 3.0}, {1.0, 2.0}), std::invalid_argument);
  RegressionSample s(2);
  const double bad[3] = {1, 2, 3};
  EXPECT_THROW(s.push_back(bad, 0.0), std::invalid_argument);
}

TEST(Project, CanonicalAxisPicksCoordinate) {
  const auto s = random_sample(30, 3, 7);
  const Vector e1{1.0, 0.0, 0.0};
  const auto p = project(s, e1);
  ASSERT_EQ(p.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(p.zs[i], s.x(i)[0]);
    EXPECT_EQ(p.ys[i], s.y(i));
  }
}

TEST(Project, DiagonalDotProduct) {
  RegressionSample s(2);
  const double x[2] = {1.0, 1.0};
  s.push_back(x, 5.0);
  const Vector v{std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};
  EXPECT_NEAR(project(s, v).zs[0], std::numbers::sqrt2, 1e-15);
}

TEST(Project, MatchesLoopOnLatticeDirections) {
  const auto s = random_sample(200, 3, 11);
  const auto lat = build_lattice(3, 0.5);
  for (std::size_t k = 0; k < lat.size(); ++k) {
    const auto v = lat.point(k);
    const auto p = project(s, v);
    for (std::size_t i = 0; i < s.size(); ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < 3; ++j) z += v[j] * s.x(i)[j];
      EXPECT_NEAR(p.zs[i], z, 1e-15);
    }
  }
}

TEST(Project, Errors) {
  const auto s = random_sample(5, 2, 1);
  EXPECT_THROW(project(s, Vector{1.0, 0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(project(s, Vector{1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(project(RegressionSample(2), Vector{1.0, 0.0}), std::invalid_argument);
}

TEST(Project, LinearInDirection) {
  const auto s = random_sample(50, 4, 3);
  const Vector v{0.3, -1.2, 0.5, 2.0};
  const Vector w{-0.7, 0.1, 1.5, 0.0};
  const double a = 1.7, b = -0.4;
  Vector comb(4);
  for (std::size_t j = 0; j < 4; ++j) comb[j] = a * v[j] + b * w[j];
  const auto pc = project_unchecked(s, comb);
  const auto pv = project_unchecked(s, v);
  const auto pw = project_unchecked(s, w);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(pc.zs[i], a * pv.zs[i] + b * pw.zs[i], 1e-13);
  }
}

TEST(Split, DefaultFractionAtHundred) {
  const auto s = random_sample(100, 2, 2);
  const auto r = split(s, SplitConfig{});
  EXPECT_EQ(r.training.size(), 75u);
  EXPECT_EQ(r.learning.size(), 25u);
}

TEST(Split, ExactHalvingOfFour) {
  const auto s = random_sample(4, 2, 2);
  SplitConfig c;
  c.train_fraction = 0.5;
  const auto r = split(s, c);
  EXPECT_EQ(r.training_idx.size(), 2u);
  EXPECT_EQ(r.learning_idx.size(), 2u);
  for (auto i : r.training_idx) {
    EXPECT_EQ(std::count(r.learning_idx.begin(), r.learning_idx.end(), i), 0);
  }
}

TEST(Split, IsPartitionAndCopiesRows) {
  const auto s = random_sample(137, 3, 9);
  SplitConfig c;
  c.seed = 42;
  const auto r = split(s, c);
  std::vector<std::size_t> all = r.training_idx;
  all.insert(all.end(), r.learning_idx.begin(), r.learning_idx.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(137);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  EXPECT_EQ(all, expect);
  for (std::size_t k = 0; k < r.learning_idx.size(); ++k) {
    EXPECT_EQ(r.learning.y(k), s.y(r.learning_idx[k]));
  }
}

TEST(Split, SeedDeterminismAndVariation) {
  const auto s = random_sample(60, 2, 5);
  SplitConfig c;
  c.seed = 17;
  EXPECT_EQ(split(s, c).training_idx, split(s, c).training_idx);
  const auto base = split(s, c).training_idx;
  int differing = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    c.seed = seed;
    if (split(s, c).training_idx != base) ++differing;
  }
  EXPECT_EQ(differing, 20);
}

TEST(Split, ScheduleMode) {
  SplitConfig c;
  c.mode = SplitMode::schedule;
  c.schedule_alpha = 1.0;
  // floor(100 * (1 - 1/ln 100)) = floor(78.285...)
  EXPECT_EQ(training_size(100, c), 78u);
  c.schedule_alpha = 2.0;
  EXPECT_EQ(training_size(100, c), static_cast<std::size_t>(std::floor(100 * (1 - std::pow(std::log(100.0), -2.0)))));
}

TEST(Split, Errors) {
  SplitConfig c;
  EXPECT_THROW(training_size(3, c), InvalidSplit);
  c.train_fraction = 0.99;
  EXPECT_THROW(training_size(10, c), InvalidSplit);  // m = n
  c.train_fraction = 1.0;
  EXPECT_THROW(training_size(10, c), InvalidSplit);
  c.mode = SplitMode::schedule;
  c.schedule_alpha = 0.01;  // (ln 4)^-0.01 ~ 0.997 leaves m = 0
  EXPECT_THROW(training_size(4, c), InvalidSplit);
  c.schedule_alpha = 0.0;
  EXPECT_THROW(training_size(100, c), InvalidSplit);
}

TEST(SmoothnessGrid, DegenerateSingleValue) {
  EXPECT_EQ(smoothness_grid(2.0, 2.0, 100.0), Vector{2.0});
}

TEST(SmoothnessGrid, UnitLogCapsAndAppends) {
  const auto g = smoothness_grid(1.0, 1.5, std::numbers::e);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 1.5);
}

TEST(SmoothnessGrid, HundredFirstThree) {
  const auto g = smoothness_grid(1.0, 4.0, 100.0);
  ASSERT_GE(g.size(), 3u);
  EXPECT_NEAR(g[0], 1.0, 1e-12);
  EXPECT_NEAR(g[1], 1.2171, 5e-5);
  EXPECT_NEAR(g[2], 1.4343, 5e-5);
  EXPECT_DOUBLE_EQ(g.back(), 4.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
  for (double v : g) {
    EXPECT_GE(v, 1.0);
    EXPECT_LE(v, 4.0);
  }
}

TEST(SmoothnessGrid, Errors) {
  EXPECT_THROW(smoothness_grid(0.0, 1.0, 100.0), std::invalid_argument);
  EXPECT_THROW(smoothness_grid(2.0, 1.0, 100.0), std::invalid_argument);
  EXPECT_THROW(smoothness_grid(1.0, 2.0, 1.0), std::invalid_argument);
}

TEST(ParamGrid, Validation) {
  ParamGrid g;
  EXPECT_NO_THROW(g.validate());
  g.smoothness_values = {1.0, 1.0};
  EXPECT_THROW(g.validate(), InvalidConfig);
  g.smoothness_values = {};
  EXPECT_THROW(g.validate(), InvalidConfig);
  g = ParamGrid{};
  g.radius_values = {0.5, -1.0};
  EXPECT_THROW(g.validate(), InvalidConfig);
}

TEST(Seeds, StreamsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, 0), derive_seed(1, 0));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  auto a = make_rng(5, 3);
  auto b = make_rng(5, 3);
  EXPECT_EQ(a(), b());
}

TEST(CsvReader, HeaderCommentsAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "sidx_csv_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.csv";
  {
    std::ofstream f(good);
    f << "# produced by hand\nx1,x2,y\n0.5,0.25,1\n-1,1,2.5\r\n";
  }
  const auto s = read_csv_sample(good.string(), 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.x(1)[0], -1.0);
  EXPECT_EQ(s.y(1), 2.5);

  const auto bad = dir / "bad.csv";
  {
    std::ofstream f(bad);
    f << "0.5,0.25,1\n0.5,1\n";
  }
  try {
    read_csv_sample(bad.string(), 2);
    FAIL() << "expected a column-count error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:2"), std::string::npos);
  }
  EXPECT_THROW(read_csv_sample((dir / "missing.csv").string(), 2), std::runtime_error);
}
