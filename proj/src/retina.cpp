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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace phosphene {
namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr std::uint32_t kAxonMapVersion = 1;

bool finite_point(RetinalPoint p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// Bundle angle at radius r for the bundle leaving the disc at angle theta0.
double bundle_angle(const SpiralParams& p, double theta0, double r) {
  const double dr = std::max(0.0, r - p.disc_radius_deg);
  double b, c;
  if (theta0 > 0) {
    const double t = std::tanh((theta0 - p.sup_center) / p.sup_width);
    c = p.sup_c0 + p.sup_c1 * t;
    b = std::exp(p.sup_lnb0 - p.sup_lnb1 * t);
  } else {
    const double t = std::tanh((-theta0 - p.inf_center) / p.inf_width);
    c = p.inf_c0 + p.inf_c1 * t;
    b = -std::exp(p.inf_lnb0 - p.inf_lnb1 * t);
  }
  return theta0 + b * std::pow(dr, c);
}

// Bundle origin angle whose trajectory passes closest (in angle) to the soma.
// Somas above the disc take superior bundles and somas below take inferior
// ones, so no trajectory crosses the horizontal raphe.
double match_bundle(const SpiralParams& p, double r_soma, double theta_soma) {
  const double sign = theta_soma >= 0 ? 1.0 : -1.0;
  auto mismatch = [&](double theta0) { return std::abs(bundle_angle(p, theta0, r_soma) - theta_soma); };
  constexpr double kStep = 0.25;
  double best = sign * kStep, best_err = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 720; ++i) {
    const double theta0 = sign * kStep * i;
    const double err = mismatch(theta0);
    if (err < best_err) {
      best_err = err;
      best = theta0;
    }
  }
  // Golden-section refinement inside the winning branch.
  double lo = std::max(std::abs(best) - kStep, 1e-9) * sign;
  double hi = std::min(std::abs(best) + kStep, 180.0) * sign;
  if (lo > hi) std::swap(lo, hi);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = mismatch(x1), f2 = mismatch(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - g * (hi - lo); f1 = mismatch(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + g * (hi - lo); f2 = mismatch(x2);
    }
  }
  const double refined = 0.5 * (lo + hi);
  return mismatch(refined) < best_err ? refined : best;
}

void fill_cum_length(AxonTrajectory& t) {
  const int n = t.size();
  t.cum_length.resize(n);
  t.cum_length(0) = 0.0;
  for (int i = 1; i < n; ++i) {
    const double dx = t.segments(i, 0) - t.segments(i - 1, 0);
    const double dy = t.segments(i, 1) - t.segments(i - 1, 1);
    t.cum_length(i) = t.cum_length(i - 1) + std::hypot(dx, dy);
  }
}

}  // namespace

double ImplantLayout::half_extent() const {
  if (electrode_positions.rows() == 0) return 0.0;
  const double dx = (electrode_positions.col(0).array() - center.x).abs().maxCoeff();
  const double dy = (electrode_positions.col(1).array() - center.y).abs().maxCoeff();
  return std::max(dx, dy);
}

ImplantLayout build_implant(int rows, int cols, double pitch, double radius,
                            RetinalPoint center) {
  if (rows < 1 || cols < 1) throw InvalidGeometry("implant needs at least one row and column");
  if (!(pitch > 0) || !(radius > 0)) throw InvalidGeometry("implant pitch and radius must be positive");
  if (!finite_point(center)) throw InvalidGeometry("implant center must be finite");

  ImplantLayout layout{rows, cols, pitch, radius, center, PointArray(rows * cols, 2)};
  const double c0 = 0.5 * (cols - 1), r0 = 0.5 * (rows - 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int e = r * cols + c;
      layout.electrode_positions(e, 0) = center.x + (c - c0) * pitch;
      layout.electrode_positions(e, 1) = center.y + (r0 - r) * pitch;
    }
  }
  if (layout.half_extent() + std::max(std::abs(center.x), std::abs(center.y)) > kFieldBound) {
    throw InvalidGeometry("implant exceeds the simulated field");
  }
  return layout;
}

AxonTrajectory axon_trajectory(RetinalPoint soma, int n_segments, const SpiralParams& params) {
  if (n_segments < 2) throw InvalidParameter("axon trajectories need at least 2 segments");
  if (!finite_point(soma)) throw InvalidGeometry("soma position must be finite");

  // Work in the right-eye frame; mirror back at the end.
  const double mirror = params.left_eye ? -1.0 : 1.0;
  const RetinalPoint s{mirror * soma.x, soma.y};
  const RetinalPoint disc = params.optic_disc;

  AxonTrajectory traj;
  traj.soma = soma;
  traj.segments.resize(n_segments, 2);

  if (params.mode == TrajectoryMode::kStraight) {
    const double dir = (disc.x >= s.x) ? 1.0 : -1.0;
    for (int i = 0; i < n_segments; ++i) {
      traj.segments(i, 0) = s.x + dir * params.straight_step * i;
      traj.segments(i, 1) = s.y;
    }
  } else {
    const double upd = params.um_per_degree;
    const double dx = (s.x - disc.x) / upd, dy = (s.y - disc.y) / upd;
    const double r_soma = std::hypot(dx, dy);
    const double r0 = params.disc_radius_deg;
    if (r_soma <= r0) {
      // Soma on the disc itself: degenerate, zero-length axon.
      traj.segments.col(0).setConstant(s.x);
      traj.segments.col(1).setConstant(s.y);
    } else {
      const double theta_soma = std::atan2(dy, dx) / kDegToRad;
      const double theta0 = match_bundle(params, r_soma, theta_soma);
      const double base = bundle_angle(params, theta0, r_soma);
      traj.segments(0, 0) = s.x;
      traj.segments(0, 1) = s.y;
      for (int i = 1; i < n_segments; ++i) {
        const double r = r_soma - (r_soma - r0) * i / (n_segments - 1);
        const double theta = (theta_soma + bundle_angle(params, theta0, r) - base) * kDegToRad;
        traj.segments(i, 0) = disc.x + upd * r * std::cos(theta);
        traj.segments(i, 1) = disc.y + upd * r * std::sin(theta);
      }
    }
  }
  traj.segments.col(0) *= mirror;
  traj.segments(0, 0) = soma.x;
  fill_cum_length(traj);
  return traj;
}

double path_length(const AxonTrajectory& traj, int a, int x) {
  if (a < 0 || x < 0 || a >= traj.size() || x >= traj.size()) {
    throw IndexError("axon segment index out of range");
  }
  return std::abs(traj.cum_length(x) - traj.cum_length(a));
}

AxonMapGrid build_axon_map(std::array<int, 2> grid_shape, double field_extent, int n_segments,
                           const SpiralParams& params, RetinalPoint field_center) {
  const auto [h, w] = grid_shape;
  if (h < 1 || w < 1) throw InvalidGeometry("axon map grid must be at least 1x1");
  if (!(field_extent > 0)) throw InvalidGeometry("axon map field extent must be positive");
  if (field_extent + std::max(std::abs(field_center.x), std::abs(field_center.y)) > kFieldBound) {
    throw InvalidGeometry("axon map field exceeds the simulated field bound");
  }
  AxonMapGrid map;
  map.height = h;
  map.width = w;
  map.n_segments = n_segments;
  map.field_extent = field_extent;
  map.field_center = field_center;
  map.params = params;
  map.pixel_positions.resize(h * w, 2);
  map.trajectories.reserve(h * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = w == 1 ? field_center.x
                              : field_center.x - field_extent + c * 2.0 * field_extent / (w - 1);
      const double y = h == 1 ? field_center.y
                              : field_center.y + field_extent - r * 2.0 * field_extent / (h - 1);
      map.pixel_positions(r * w + c, 0) = x;
      map.pixel_positions(r * w + c, 1) = y;
      map.trajectories.push_back(axon_trajectory({x, y}, n_segments, params));
    }
  }
  return map;
}

double default_field_extent(const ImplantLayout& layout, double rho_max) {
  return layout.half_extent() + 2.0 * rho_max;
}

void save_axon_map(const AxonMapGrid& map, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write axon map " + path.string());
  os.write("AXMP", 4);
  detail::write_u32(os, kAxonMapVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(map.height));
  detail::write_u32(os, static_cast<std::uint32_t>(map.width));
  detail::write_u32(os, static_cast<std::uint32_t>(map.n_segments));
  for (int p = 0; p < map.n_pixels(); ++p) {
    detail::write_f32(os, static_cast<float>(map.pixel_positions(p, 0)));
    detail::write_f32(os, static_cast<float>(map.pixel_positions(p, 1)));
  }
  for (const auto& t : map.trajectories) {
    for (int i = 0; i < t.size(); ++i) {
      detail::write_f32(os, static_cast<float>(t.segments(i, 0)));
      detail::write_f32(os, static_cast<float>(t.segments(i, 1)));
    }
  }
  for (const auto& t : map.trajectories) {
    for (int i = 0; i < t.size(); ++i) detail::write_f32(os, static_cast<float>(t.cum_length(i)));
  }
  if (!os) throw IoError("failed writing axon map " + path.string());
}

AxonMapGrid load_axon_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open axon map " + path.string());
  detail::expect_magic(is, "AXMP", "axon map");
  const auto version = detail::read_u32(is, "axon map header");
  if (version != kAxonMapVersion) throw LoadError("unsupported axon map version");
  AxonMapGrid map;
  map.height = static_cast<int>(detail::read_u32(is, "axon map header"));
  map.width = static_cast<int>(detail::read_u32(is, "axon map header"));
  map.n_segments = static_cast<int>(detail::read_u32(is, "axon map header"));
  if (map.height < 1 || map.width < 1 || map.n_segments < 2) throw LoadError("invalid axon map header");
  const int n = map.n_pixels();
  map.pixel_positions.resize(n, 2);
  for (int p = 0; p < n; ++p) {
    map.pixel_positions(p, 0) = detail::read_f32(is, "axon map pixels");
    map.pixel_positions(p, 1) = detail::read_f32(is, "axon map pixels");
  }
  map.trajectories.resize(n);
  for (int p = 0; p < n; ++p) {
    auto& t = map.trajectories[p];
    t.soma = {map.pixel_positions(p, 0), map.pixel_positions(p, 1)};
    t.segments.resize(map.n_segments, 2);
    for (int i = 0; i < map.n_segments; ++i) {
      t.segments(i, 0) = detail::read_f32(is, "axon map segments");
      t.segments(i, 1) = detail::read_f32(is, "axon map segments");
    }
  }
  for (auto& t : map.trajectories) {
    t.cum_length.resize(map.n_segments);
    for (int i = 0; i < map.n_segments; ++i) t.cum_length(i) = detail::read_f32(is, "axon map lengths");
  }
  const double x0 = map.pixel_positions.col(0).minCoeff(), x1 = map.pixel_positions.col(0).maxCoeff();
  const double y0 = map.pixel_positions.col(1).minCoeff(), y1 = map.pixel_positions.col(1).maxCoeff();
  map.field_center = {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
  map.field_extent = 0.5 * std::max(x1 - x0, y1 - y0);
  return map;
}

}  // namespace phosphene
