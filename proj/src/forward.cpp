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

#include "phosphene/forward.hpp"

#include <cmath>

namespace phosphene {

void validate_stimulus(const Stimulus& s) {
  if (!s.allFinite()) throw InvalidParameter("stimulus contains non-finite entries");
  if ((s.array() < 0.0).any()) throw InvalidParameter("stimulus entries must be nonnegative");
}

namespace detail {

ElectrodeFactors electrode_factors(const Stimulus& s, const PatientParams& phi, bool with_jacobian) {
  const auto ne = s.rows();
  ElectrodeFactors f;
  f.bright.resize(ne);
  f.radial.resize(ne);
  f.axial.resize(ne);
  f.fx.resize(ne);
  if (with_jacobian) f.jac.resize(ne);
  const double rho2 = phi.rho * phi.rho, lam2 = phi.lambda * phi.lambda;
  for (Eigen::Index e = 0; e < ne; ++e) {
    auto& fx = f.fx[e];
    fx = effects(s(e, kFreq), s(e, kAmp), s(e, kPdur), phi, with_jacobian ? &f.jac[e] : nullptr);
    f.bright[e] = fx.bright;
    f.radial[e] = 1.0 / (2.0 * rho2 * fx.size);
    f.axial[e] = 1.0 / (2.0 * lam2 * fx.streak);
    if (fx.bright > 0.0) f.active.push_back(static_cast<int>(e));
  }
  return f;
}

}  // namespace detail

Percept render_reference(const Stimulus& s, const PatientParams& phi, const AxonMapGrid& map,
                         const ImplantLayout& layout) {
  if (s.rows() != layout.n_electrodes()) throw DimensionError("stimulus does not match implant");
  validate_stimulus(s);
  phi.validate();
  Percept out = Percept::Zero(map.height, map.width);
  for (int p = 0; p < map.n_pixels(); ++p) {
    const auto& traj = map.trajectories[p];
    double best = 0.0;
    for (int a = 0; a < traj.size(); ++a) {
      const double ds = path_length(traj, 0, a);
      double sum = 0.0;
      for (int e = 0; e < layout.n_electrodes(); ++e) {
        const EffectValues fx = effects(s(e, kFreq), s(e, kAmp), s(e, kPdur), phi);
        const double dx = traj.segments(a, 0) - layout.electrode_positions(e, 0);
        const double dy = traj.segments(a, 1) - layout.electrode_positions(e, 1);
        sum += fx.bright * std::exp(-(dx * dx + dy * dy) / (2.0 * phi.rho * phi.rho * fx.size) -
                                    ds * ds / (2.0 * phi.lambda * phi.lambda * fx.streak));
      }
      if (a == 0 || sum > best) best = sum;
    }
    out.data()[p] = best;
  }
  return out;
}

}  // namespace phosphene
