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

// Retinal geometry: electrode layouts, nerve fiber bundle trajectories and
// the per-pixel axon map consumed by the renderer.
//
// Coordinates are in microns on the retinal surface with the fovea at the
// origin, x along the temporal-nasal axis and y along the inferior-superior
// axis (superior positive). Image row 0 is the most superior row.

#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "phosphene/common.hpp"

namespace phosphene {

// Simulated field bound; every point handled by this module satisfies
// |x|, |y| <= kFieldBound.
inline constexpr double kFieldBound = 15000.0;

struct RetinalPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const RetinalPoint&, const RetinalPoint&) = default;
};

// N x 2 array of points, one (x, y) per row.
using PointArray = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct ImplantLayout {
  int rows = 0;
  int cols = 0;
  double pitch = 0.0;
  double electrode_radius = 0.0;  // stored, not used by the forward model
  RetinalPoint center;
  PointArray electrode_positions;  // row-major electrode order

  int n_electrodes() const { return rows * cols; }
  RetinalPoint electrode(int e) const {
    return {electrode_positions(e, 0), electrode_positions(e, 1)};
  }
  // Largest |x - center.x| or |y - center.y| over all electrodes.
  double half_extent() const;
};

ImplantLayout build_implant(int rows, int cols, double pitch, double radius,
                            RetinalPoint center = {});

enum class TrajectoryMode { kSpiral, kStraight };

// Constants of the nerve fiber bundle trajectory family.
//
// Spiral mode traces bundles in polar coordinates (r, theta) centred on the
// optic disc, angles in degrees, radii in degrees of visual angle:
//
//   theta(r) = theta0 + b(theta0) * (r - r0)^c(theta0),    r >= r0
//
// with, for superior bundles (theta0 > 0),
//   c = sup_c0 + sup_c1 * tanh((theta0 - sup_center) / sup_width)
//   b = exp(sup_lnb0 + sup_lnb1 * tanh(-(theta0 - sup_center) / sup_width))
// and for inferior bundles (theta0 < 0), with b negated,
//   c = inf_c0 + inf_c1 * tanh((-theta0 - inf_center) / inf_width)
//   b = -exp(inf_lnb0 + inf_lnb1 * tanh(-(-theta0 - inf_center) / inf_width))
//
// The defaults are the published Jansonius fit. A soma is attached to the
// bundle whose angle at the soma's radius is closest to the soma's angle, and
// the trajectory is that bundle rotated to pass exactly through the soma.
//
// Straight mode replaces every bundle by a horizontal line heading toward the
// disc with uniform `straight_step` spacing; used for analytic tests.
struct SpiralParams {
  TrajectoryMode mode = TrajectoryMode::kSpiral;
  RetinalPoint optic_disc{4000.0, 0.0};  // right eye
  bool left_eye = false;                 // mirrors the disc and all bundles in x
  double um_per_degree = 280.0;
  double disc_radius_deg = 4.0;  // r0; bundles terminate at the disc rim

  double sup_c0 = 1.9, sup_c1 = 1.4, sup_lnb0 = -1.9, sup_lnb1 = 3.9;
  double sup_center = 121.0, sup_width = 14.0;
  double inf_c0 = 1.0, inf_c1 = 0.5, inf_lnb0 = 0.7, inf_lnb1 = 1.5;
  double inf_center = 90.0, inf_width = 25.0;

  double straight_step = 10.0;  // microns between straight-mode segments

  static SpiralParams straight(double step = 10.0) {
    SpiralParams p;
    p.mode = TrajectoryMode::kStraight;
    p.straight_step = step;
    return p;
  }

  friend bool operator==(const SpiralParams&, const SpiralParams&) = default;
};

struct AxonTrajectory {
  RetinalPoint soma;
  PointArray segments;       // segments(0) == soma, heading toward the disc
  Eigen::VectorXd cum_length;  // arc length from the soma, cum_length(0) == 0

  int size() const { return static_cast<int>(segments.rows()); }
};

AxonTrajectory axon_trajectory(RetinalPoint soma, int n_segments,
                               const SpiralParams& params = {});

// Path length along the axon between two segment indices.
double path_length(const AxonTrajectory& traj, int a, int x);

struct AxonMapGrid {
  int height = 0;
  int width = 0;
  int n_segments = 0;
  double field_extent = 0.0;  // half-width of the square field, microns
  RetinalPoint field_center;
  SpiralParams params;
  PointArray pixel_positions;  // row-major pixel order
  std::vector<AxonTrajectory> trajectories;

  int n_pixels() const { return height * width; }
};

// Builds the per-pixel axon map. Pixel (r, c) of an H x W grid sits at
//   x = cx - E + c * 2E / (W - 1),   y = cy + E - r * 2E / (H - 1)
// (the centre of the field when the dimension is 1).
AxonMapGrid build_axon_map(std::array<int, 2> grid_shape, double field_extent,
                           int n_segments, const SpiralParams& params = {},
                           RetinalPoint field_center = {});

// Field half-width covering the implant plus a 2 * rho_max margin.
double default_field_extent(const ImplantLayout& layout, double rho_max);

// Binary container, all fields little-endian:
//   char[4] "AXMP", u32 version (1), u32 H, u32 W, u32 n_segments,
//   f32 pixel_positions[H*W][2],
//   f32 segments[H*W][n_segments][2],
//   f32 cum_length[H*W][n_segments]
// Spiral constants are not stored; a loaded map carries default params.
void save_axon_map(const AxonMapGrid& map, const std::filesystem::path& path);
AxonMapGrid load_axon_map(const std::filesystem::path& path);

}  // namespace phosphene
