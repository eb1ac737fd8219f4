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

// Phosphene forward model.
//
// The brightness of pixel x, whose ganglion cell axon passes through the
// segments a in A(x), is
//
//   max_a  sum_e  Fb_e * exp( -|a - e|^2 / (2 rho^2 Fs_e)
//                             -  d(x, a)^2 / (2 lambda^2 Fk_e) )
//
// where d(x, a) is the path length along the axon from the soma at x to a and
// (Fb, Fs, Fk) are the effect scalings of electrode e's stimulus.
//
// RenderKernel precomputes every squared distance |a - e|^2 and d(x, a)^2 for
// one (axon map, implant) pair; a render is then a fused exp-sum-max over that
// table and works for any PatientParams.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "phosphene/common.hpp"
#include "phosphene/effects.hpp"
#include "phosphene/retina.hpp"

namespace phosphene {

// Segment pruning. A segment is dropped when, for every electrode,
//   exp(-|a-e|^2 / (2 rho_max^2 size_max) - d^2 / (2 lambda_max^2 streak_max))
// is below `threshold`, i.e. its best-case contribution relative to Fb_e is
// negligible for any patient and stimulus within the bounds.
struct PruneBounds {
  double rho_max = 800.0;
  double lambda_max = 2000.0;
  double size_max = 6.0;
  double streak_max = 1.1;
  double threshold = 1e-9;
};

template <typename Scalar>
class RenderKernel {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowArray = Eigen::Array<Scalar, 1, Eigen::Dynamic>;

  struct PixelBlock {
    Matrix dist2;                   // n_electrodes x kept segments
    RowArray path2;                 // kept segments
    std::vector<int> segment_index; // original segment index of each column
  };

  RenderKernel(const AxonMapGrid& map, const ImplantLayout& layout,
               std::optional<PruneBounds> prune = std::nullopt)
      : height_(map.height), width_(map.width), n_electrodes_(layout.n_electrodes()) {
    blocks_.resize(map.n_pixels());
    for (int p = 0; p < map.n_pixels(); ++p) {
      const auto& traj = map.trajectories[p];
      std::vector<int> keep;
      keep.reserve(traj.size());
      for (int a = 0; a < traj.size(); ++a) {
        if (!prune || segment_matters(traj, a, layout, *prune)) keep.push_back(a);
      }
      auto& blk = blocks_[p];
      const int n = static_cast<int>(keep.size());
      blk.dist2.resize(n_electrodes_, n);
      blk.path2.resize(n);
      blk.segment_index = keep;
      for (int j = 0; j < n; ++j) {
        const int a = keep[j];
        const double len = traj.cum_length(a);
        blk.path2(j) = static_cast<Scalar>(len * len);
        for (int e = 0; e < n_electrodes_; ++e) {
          const double dx = traj.segments(a, 0) - layout.electrode_positions(e, 0);
          const double dy = traj.segments(a, 1) - layout.electrode_positions(e, 1);
          blk.dist2(e, j) = static_cast<Scalar>(dx * dx + dy * dy);
        }
      }
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int n_pixels() const { return height_ * width_; }
  int n_electrodes() const { return n_electrodes_; }
  const PixelBlock& block(int p) const { return blocks_[p]; }

  std::size_t n_entries() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += static_cast<std::size_t>(b.dist2.size());
    return n;
  }

 private:
  static bool segment_matters(const AxonTrajectory& traj, int a, const ImplantLayout& layout,
                              const PruneBounds& b) {
    const double len = traj.cum_length(a);
    const double axial = len * len / (2.0 * b.lambda_max * b.lambda_max * b.streak_max);
    const double cutoff = -std::log(b.threshold);
    if (axial > cutoff) return false;
    const double radial_scale = 2.0 * b.rho_max * b.rho_max * b.size_max;
    for (int e = 0; e < layout.n_electrodes(); ++e) {
      const double dx = traj.segments(a, 0) - layout.electrode_positions(e, 0);
      const double dy = traj.segments(a, 1) - layout.electrode_positions(e, 1);
      if ((dx * dx + dy * dy) / radial_scale + axial <= cutoff) return true;
    }
    return false;
  }

  int height_, width_, n_electrodes_;
  std::vector<PixelBlock> blocks_;
};

// Throws InvalidParameter on negative or non-finite entries.
void validate_stimulus(const Stimulus& s);

namespace detail {

// Per-electrode factors derived from the effect scalings.
struct ElectrodeFactors {
  Eigen::VectorXd bright;      // Fb_e
  Eigen::VectorXd radial;      // 1 / (2 rho^2 Fs_e)
  Eigen::VectorXd axial;       // 1 / (2 lambda^2 Fk_e)
  std::vector<EffectValues> fx;
  std::vector<EffectJacobian> jac;
  std::vector<int> active;     // electrodes with Fb_e > 0
};

ElectrodeFactors electrode_factors(const Stimulus& s, const PatientParams& phi, bool with_jacobian);

template <typename Scalar>
void check_shapes(const Stimulus& s, const RenderKernel<Scalar>& kernel) {
  if (s.rows() != kernel.n_electrodes()) {
    throw DimensionError("stimulus has " + std::to_string(s.rows()) +
                         " electrodes, render kernel expects " +
                         std::to_string(kernel.n_electrodes()));
  }
}

// Electrode-summed intensity along the kept segments of one pixel.
template <typename Scalar>
Eigen::Array<Scalar, 1, Eigen::Dynamic> pixel_intensity(
    const typename RenderKernel<Scalar>::PixelBlock& blk, const ElectrodeFactors& f) {
  Eigen::Array<Scalar, 1, Eigen::Dynamic> acc =
      Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(blk.path2.size());
  for (int e : f.active) {
    const auto fb = static_cast<Scalar>(f.bright[e]);
    const auto cr = static_cast<Scalar>(f.radial[e]);
    const auto ca = static_cast<Scalar>(f.axial[e]);
    acc += fb * (-(blk.dist2.row(e).array() * cr + blk.path2 * ca)).exp();
  }
  return acc;
}

// Max with ties broken toward the lowest index.
template <typename Scalar>
Scalar first_max(const Eigen::Array<Scalar, 1, Eigen::Dynamic>& v, int* index) {
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  int arg = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] > best) {
      best = v[i];
      arg = static_cast<int>(i);
    }
  }
  if (index) *index = arg;
  return v.size() == 0 ? Scalar(0) : best;
}

}  // namespace detail

// Fast render over a precomputed kernel.
template <typename Scalar>
ImageT<Scalar> render(const Stimulus& s, const PatientParams& phi, const RenderKernel<Scalar>& kernel) {
  detail::check_shapes(s, kernel);
  validate_stimulus(s);
  phi.validate();
  const auto f = detail::electrode_factors(s, phi, false);
  ImageT<Scalar> out = ImageT<Scalar>::Zero(kernel.height(), kernel.width());
  if (f.active.empty()) return out;
  for (int p = 0; p < kernel.n_pixels(); ++p) {
    const auto acc = detail::pixel_intensity<Scalar>(kernel.block(p), f);
    out.data()[p] = detail::first_max<Scalar>(acc, nullptr);
  }
  return out;
}

struct RenderGradResult {
  Percept percept;
  StimulusGrad grad;
};

// Renders, asks `upstream_fn(percept)` for dL/d(percept), and returns the
// percept with dL/d(stimulus). The max over segments routes the gradient to
// the arg-max segment, lowest index on ties. Only one render pass is made.
template <typename Scalar, typename UpstreamFn>
RenderGradResult render_backprop(const Stimulus& s, const PatientParams& phi, const RenderKernel<Scalar>& kernel,
                                 UpstreamFn&& upstream_fn) {
  detail::check_shapes(s, kernel);
  validate_stimulus(s);
  phi.validate();
  const auto f = detail::electrode_factors(s, phi, true);
  const int ne = kernel.n_electrodes();
  RenderGradResult res{Percept::Zero(kernel.height(), kernel.width()), StimulusGrad::Zero(ne, 3)};
  std::vector<int> argmax(kernel.n_pixels(), 0);
  if (!f.active.empty()) {
    for (int p = 0; p < kernel.n_pixels(); ++p) {
      const auto acc = detail::pixel_intensity<Scalar>(kernel.block(p), f);
      res.percept.data()[p] = static_cast<double>(detail::first_max<Scalar>(acc, &argmax[p]));
    }
  }
  const Percept upstream = upstream_fn(static_cast<const Percept&>(res.percept));
  if (upstream.rows() != kernel.height() || upstream.cols() != kernel.width()) {
    throw DimensionError("upstream gradient shape does not match the percept");
  }

  // d(loss)/d(Fb, Fs, Fk) per electrode.
  Eigen::VectorXd g_bright = Eigen::VectorXd::Zero(ne);
  Eigen::VectorXd g_size = Eigen::VectorXd::Zero(ne);
  Eigen::VectorXd g_streak = Eigen::VectorXd::Zero(ne);
  for (int p = 0; p < kernel.n_pixels(); ++p) {
    const auto& blk = kernel.block(p);
    const double up = upstream.data()[p];
    if (up == 0.0 || blk.path2.size() == 0) continue;
    const int arg = argmax[p];
    const double path2 = static_cast<double>(blk.path2(arg));
    for (int e = 0; e < ne; ++e) {
      const double d2 = static_cast<double>(blk.dist2(e, arg));
      const double ex = std::exp(-(d2 * f.radial[e] + path2 * f.axial[e]));
      g_bright[e] += up * ex;
      const double w = up * f.bright[e] * ex;
      if (w == 0.0) continue;
      // d/dFs of exp(-d2 / (2 rho^2 Fs)) = exp * d2 / (2 rho^2 Fs^2)
      g_size[e] += w * d2 * f.radial[e] / f.fx[e].size;
      g_streak[e] += w * path2 * f.axial[e] / f.fx[e].streak;
    }
  }
  for (int e = 0; e < ne; ++e) {
    const Eigen::RowVector3d g(g_bright[e], g_size[e], g_streak[e]);
    res.grad.row(e) = g * f.jac[e];
  }
  return res;
}

// Render plus the gradient of sum(upstream .* percept) with respect to every
// stimulus entry.
template <typename Scalar>
RenderGradResult render_with_grad(const Stimulus& s, const PatientParams& phi,
                                  const RenderKernel<Scalar>& kernel, const Percept& upstream) {
  return render_backprop(s, phi, kernel, [&](const Percept&) { return upstream; });
}

// Direct transcription of the model: per pixel, per segment, per electrode,
// with the effect scalings and path lengths recomputed for every term.
Percept render_reference(const Stimulus& s, const PatientParams& phi, const AxonMapGrid& map,
                         const ImplantLayout& layout);

// Abstract forward model so encoders can train against either the true model
// or a learned surrogate.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual int n_electrodes() const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual Percept render(const Stimulus& s, const PatientParams& phi) const = 0;
  virtual RenderGradResult render_with_grad(const Stimulus& s, const PatientParams& phi,
                                            const Percept& upstream) const = 0;
  // Render, then backpropagate the gradient `upstream_fn` derives from the
  // percept. The default renders twice; models may fuse the passes.
  virtual RenderGradResult render_backprop(const Stimulus& s, const PatientParams& phi,
                                           const std::function<Percept(const Percept&)>& upstream_fn) const {
    const Percept p = render(s, phi);
    return render_with_grad(s, phi, upstream_fn(p));
  }
};

template <typename Scalar = double>
class PhospheneModel final : public ForwardModel {
 public:
  explicit PhospheneModel(RenderKernel<Scalar> kernel) : kernel_(std::move(kernel)) {}
  PhospheneModel(const AxonMapGrid& map, const ImplantLayout& layout,
                 std::optional<PruneBounds> prune = std::nullopt)
      : kernel_(map, layout, prune) {}

  int n_electrodes() const override { return kernel_.n_electrodes(); }
  int height() const override { return kernel_.height(); }
  int width() const override { return kernel_.width(); }
  Percept render(const Stimulus& s, const PatientParams& phi) const override {
    return phosphene::render(s, phi, kernel_).template cast<double>();
  }
  RenderGradResult render_with_grad(const Stimulus& s, const PatientParams& phi,
                                    const Percept& upstream) const override {
    return phosphene::render_with_grad(s, phi, kernel_, upstream);
  }
  RenderGradResult render_backprop(const Stimulus& s, const PatientParams& phi,
                                   const std::function<Percept(const Percept&)>& upstream_fn) const override {
    return phosphene::render_backprop(s, phi, kernel_, upstream_fn);
  }
  const RenderKernel<Scalar>& kernel() const { return kernel_; }

 private:
  RenderKernel<Scalar> kernel_;
};

}  // namespace phosphene
