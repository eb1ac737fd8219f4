// Copyright 2026 The Phosphene Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "phosphene/retina.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gtest/gtest.h"

namespace phosphene {
namespace {

double brute_force_length(const AxonTrajectory& t, int from, int to) {
  if (from > to) std::swap(from, to);
  double sum = 0.0;
  for (int i = from; i < to; ++i) {
    const double dx = t.segments(i + 1, 0) - t.segments(i, 0);
    const double dy = t.segments(i + 1, 1) - t.segments(i, 1);
    sum += std::sqrt(dx * dx + dy * dy);
  }
  return sum;
}

// Arc length at fraction f of the index range, linearly interpolated.
double length_at_fraction(const AxonTrajectory& t, double f) {
  const double pos = f * (t.size() - 1);
  const int i = static_cast<int>(std::floor(pos));
  if (i >= t.size() - 1) return t.cum_length(t.size() - 1);
  const double w = pos - i;
  return (1 - w) * t.cum_length(i) + w * t.cum_length(i + 1);
}

TEST(BuildImplant, FifteenByFifteenArray) {
  const auto layout = build_implant(15, 15, 400, 75, {});
  EXPECT_EQ(layout.n_electrodes(), 225);
  EXPECT_DOUBLE_EQ(layout.electrode_positions.col(0).maxCoeff(), 2800.0);
  EXPECT_DOUBLE_EQ(layout.electrode_positions.col(0).minCoeff(), -2800.0);
  EXPECT_DOUBLE_EQ(layout.electrode_positions.col(1).maxCoeff(), 2800.0);
  // Electrode (7, 7) is the centre one.
  EXPECT_EQ(layout.electrode(7 * 15 + 7), (RetinalPoint{0.0, 0.0}));
}

TEST(BuildImplant, SingleElectrodeAtCenter) {
  const auto layout = build_implant(1, 1, 400, 75, {});
  ASSERT_EQ(layout.n_electrodes(), 1);
  EXPECT_EQ(layout.electrode(0), (RetinalPoint{0.0, 0.0}));
}

TEST(BuildImplant, TwoByTwoSymmetric) {
  const auto layout = build_implant(2, 2, 100, 10, {});
  std::set<std::pair<double, double>> got;
  for (int e = 0; e < 4; ++e) got.insert({layout.electrode(e).x, layout.electrode(e).y});
  const std::set<std::pair<double, double>> want{{-50, -50}, {-50, 50}, {50, -50}, {50, 50}};
  EXPECT_EQ(got, want);
  // Row-major with row 0 superior: first electrode is top-left.
  EXPECT_EQ(layout.electrode(0), (RetinalPoint{-50, 50}));
  EXPECT_EQ(layout.electrode(1), (RetinalPoint{50, 50}));
}

TEST(BuildImplant, RejectsBadGeometry) {
  EXPECT_THROW(build_implant(3, 3, 0, 75), InvalidGeometry);
  EXPECT_THROW(build_implant(3, 3, -400, 75), InvalidGeometry);
  EXPECT_THROW(build_implant(3, 3, 400, 0), InvalidGeometry);
  EXPECT_THROW(build_implant(0, 3, 400, 75), InvalidGeometry);
}

TEST(BuildImplant, CenteredGridIsPointSymmetric) {
  for (int rows = 1; rows <= 7; ++rows) {
    for (int cols = 1; cols <= 7; ++cols) {
      const auto layout = build_implant(rows, cols, 123.0, 10, {});
      std::set<std::pair<double, double>> pts;
      for (int e = 0; e < layout.n_electrodes(); ++e) pts.insert({layout.electrode(e).x, layout.electrode(e).y});
      for (const auto& [x, y] : pts) {
        EXPECT_TRUE(pts.count({-x, -y})) << rows << "x" << cols << " missing mirror of " << x << "," << y;
      }
    }
  }
}

TEST(AxonTrajectory, StraightFallbackStaysOnMeridian) {
  const auto t = axon_trajectory({-1200.0, 0.0}, 50, SpiralParams::straight(10.0));
  ASSERT_EQ(t.size(), 50);
  for (int i = 0; i < t.size(); ++i) EXPECT_EQ(t.segments(i, 1), 0.0);
  // Heads toward the disc (positive x for a right eye).
  EXPECT_GT(t.segments(49, 0), t.segments(0, 0));
}

TEST(AxonTrajectory, FiveHundredSegments) {
  const auto t = axon_trajectory({-500.0, 700.0}, 500);
  EXPECT_EQ(t.size(), 500);
  EXPECT_EQ(t.cum_length.size(), 500);
}

TEST(AxonTrajectory, StartsAtSomaAndEndsAtDiscRim) {
  const SpiralParams params;
  for (RetinalPoint soma : {RetinalPoint{-2000, 1500}, RetinalPoint{-2000, -1500}, RetinalPoint{1000, 2500},
                            RetinalPoint{0, 0}, RetinalPoint{8000, -300}}) {
    const auto t = axon_trajectory(soma, 200, params);
    EXPECT_EQ(t.segments(0, 0), soma.x);
    EXPECT_EQ(t.segments(0, 1), soma.y);
    const double dx = t.segments(199, 0) - params.optic_disc.x;
    const double dy = t.segments(199, 1) - params.optic_disc.y;
    EXPECT_NEAR(std::hypot(dx, dy), params.disc_radius_deg * params.um_per_degree, 1e-6);
  }
}

TEST(AxonTrajectory, SuperiorAndInferiorBundlesArcTowardDisc) {
  // A soma above the fovea must stay in the superior hemifield on its way to
  // the disc; the converse for inferior somas.
  const auto sup = axon_trajectory({-1000, 800}, 300);
  const auto inf = axon_trajectory({-1000, -800}, 300);
  for (int i = 0; i < 300; ++i) {
    EXPECT_GT(sup.segments(i, 1), -1e-6);
    EXPECT_LT(inf.segments(i, 1), 1e-6);
  }
}

TEST(AxonTrajectory, CumulativeLengthMatchesIndependentSum) {
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    const RetinalPoint soma{uniform(rng, -5000, 3000), uniform(rng, -4000, 4000)};
    const auto t = axon_trajectory(soma, 500);
    EXPECT_EQ(t.cum_length(0), 0.0);
    for (int i = 1; i < t.size(); ++i) ASSERT_GE(t.cum_length(i), t.cum_length(i - 1));
    EXPECT_NEAR(t.cum_length(499), brute_force_length(t, 0, 499), 1e-9 * (1 + t.cum_length(499)));
  }
}

TEST(AxonTrajectory, DiscretizationConverges) {
  Rng rng(11);
  for (int k = 0; k < 25; ++k) {
    const RetinalPoint soma{uniform(rng, -2800, 2800), uniform(rng, -2800, 2800)};
    const auto coarse = axon_trajectory(soma, 250);
    const auto fine = axon_trajectory(soma, 500);
    for (double f : {0.25, 0.5, 0.75, 1.0}) {
      const double lc = length_at_fraction(coarse, f), lf = length_at_fraction(fine, f);
      if (lf < 1e-9) continue;
      EXPECT_LT(std::abs(lc - lf) / lf, 0.01) << "soma " << soma.x << "," << soma.y << " f=" << f;
    }
  }
}

TEST(AxonTrajectory, RejectsTooFewSegments) {
  EXPECT_THROW(axon_trajectory({0, 0}, 1), InvalidParameter);
}

TEST(AxonTrajectory, LeftEyeMirrorsRightEye) {
  SpiralParams left;
  left.left_eye = true;
  const auto r = axon_trajectory({-900, 600}, 100);
  const auto l = axon_trajectory({900, 600}, 100, left);
  for (int i = 0; i < 100; ++i) {
    EXPECT_NEAR(l.segments(i, 0), -r.segments(i, 0), 1e-9);
    EXPECT_NEAR(l.segments(i, 1), r.segments(i, 1), 1e-9);
  }
}

TEST(PathLength, ZeroForSameSegment) {
  const auto t = axon_trajectory({-1000, 300}, 100);
  for (int i : {0, 17, 99}) EXPECT_EQ(path_length(t, i, i), 0.0);
}

TEST(PathLength, UniformStraightSpacing) {
  const auto t = axon_trajectory({0, 0}, 20, SpiralParams::straight(10.0));
  EXPECT_DOUBLE_EQ(path_length(t, 0, 5), 50.0);
  EXPECT_DOUBLE_EQ(path_length(t, 5, 0), 50.0);
}

TEST(PathLength, MatchesPiecewiseSumOnRandomTrajectories) {
  Rng rng(3);
  for (int k = 0; k < 30; ++k) {
    const auto t = axon_trajectory({uniform(rng, -4000, 2000), uniform(rng, -3000, 3000)}, 64);
    const int a = uniform_int(rng, 0, 63), b = uniform_int(rng, 0, 63);
    EXPECT_NEAR(path_length(t, a, b), brute_force_length(t, a, b), 1e-9 * (1 + t.cum_length(63)));
  }
}

TEST(PathLength, IsAOneDimensionalMetric) {
  Rng rng(5);
  const auto t = axon_trajectory({-2500, 1200}, 128);
  for (int k = 0; k < 200; ++k) {
    int a = uniform_int(rng, 0, 127), b = uniform_int(rng, 0, 127), c = uniform_int(rng, 0, 127);
    EXPECT_GE(path_length(t, a, b) + path_length(t, b, c), path_length(t, a, c) - 1e-9);
    EXPECT_DOUBLE_EQ(path_length(t, a, b), path_length(t, b, a));
    int lo = std::min({a, b, c}), hi = std::max({a, b, c});
    int mid = a + b + c - lo - hi;
    EXPECT_NEAR(path_length(t, lo, mid) + path_length(t, mid, hi), path_length(t, lo, hi), 1e-9);
  }
}

TEST(PathLength, RejectsOutOfRange) {
  const auto t = axon_trajectory({0, 0}, 10);
  EXPECT_THROW(path_length(t, -1, 2), IndexError);
  EXPECT_THROW(path_length(t, 0, 10), IndexError);
}

TEST(BuildAxonMap, FortyNineSquare) {
  const auto map = build_axon_map({49, 49}, 4400, 20);
  EXPECT_EQ(map.trajectories.size(), 2401u);
  for (const auto& t : map.trajectories) EXPECT_EQ(t.size(), 20);
  EXPECT_DOUBLE_EQ(map.pixel_positions(0, 0), -4400);
  EXPECT_DOUBLE_EQ(map.pixel_positions(0, 1), 4400);
  EXPECT_DOUBLE_EQ(map.pixel_positions(2400, 0), 4400);
}

TEST(BuildAxonMap, SinglePixelAtFieldCenter) {
  const auto map = build_axon_map({1, 1}, 1000, 8, {}, {120, -40});
  ASSERT_EQ(map.trajectories.size(), 1u);
  EXPECT_EQ(map.trajectories[0].soma, (RetinalPoint{120, -40}));
}

TEST(BuildAxonMap, Deterministic) {
  const auto a = build_axon_map({9, 7}, 1500, 32);
  const auto b = build_axon_map({9, 7}, 1500, 32);
  ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
  EXPECT_EQ(a.pixel_positions, b.pixel_positions);
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    EXPECT_EQ(a.trajectories[i].segments, b.trajectories[i].segments);
    EXPECT_EQ(a.trajectories[i].cum_length, b.trajectories[i].cum_length);
  }
}

TEST(BuildAxonMap, RejectsZeroExtent) {
  EXPECT_THROW(build_axon_map({5, 5}, 0.0, 10), InvalidGeometry);
  EXPECT_THROW(build_axon_map({0, 5}, 100.0, 10), InvalidGeometry);
}

TEST(BuildAxonMap, DefaultFieldExtentAddsMargin) {
  const auto layout = build_implant(15, 15, 400, 75);
  EXPECT_DOUBLE_EQ(default_field_extent(layout, 800), 2800 + 1600);
}

TEST(AxonMapFile, RoundTrip) {
  const auto map = build_axon_map({5, 4}, 1500, 16);
  const auto path = std::filesystem::temp_directory_path() / "phosphene_axon_map_test.bin";
  save_axon_map(map, path);
  const auto back = load_axon_map(path);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.width, 4);
  EXPECT_EQ(back.n_segments, 16);
  EXPECT_NEAR(back.field_extent, 1500, 1e-3);
  for (int p = 0; p < map.n_pixels(); ++p) {
    EXPECT_TRUE(back.trajectories[p].segments.isApprox(map.trajectories[p].segments, 1e-6));
    EXPECT_NEAR(back.trajectories[p].cum_length(15), map.trajectories[p].cum_length(15), 1e-2);
  }
  std::filesystem::remove(path);
}

TEST(AxonMapFile, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "phosphene_axon_map_bad.bin";
  { std::ofstream(path) << "not an axon map"; }
  EXPECT_THROW(load_axon_map(path), LoadError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace phosphene
