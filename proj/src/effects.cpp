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

#include "phosphene/effects.hpp"

#include <algorithm>
#include <cmath>

namespace phosphene {

PatientParams::Coefficients PatientParams::default_coefficients() {
  Coefficients a;
  a[kChargeSlope] = 0.27;
  a[kChargeIntercept] = 1.0 - 0.27 * 0.45;  // q == 1 at 0.45 ms
  a[kAmpGain] = 0.5;
  a[kFreqGain] = 0.025;
  a[kGateSoftness] = 0.5;
  a[kSizeSlope] = 0.5;
  a[kBrightCeiling] = 10.0;
  a[kStreakIntercept] = 1.1;
  a[kStreakSlope] = 0.2;
  a[kBrightLeak] = 0.05;
  return a;
}

PatientParams::Vector PatientParams::as_vector() const {
  Vector v;
  v << rho, lambda, a;
  return v;
}

PatientParams PatientParams::from_vector(const Vector& v) {
  PatientParams p;
  p.rho = v[0];
  p.lambda = v[1];
  p.a = v.tail<kCoefficientCount>();
  return p;
}

void PatientParams::validate() const {
  if (!(std::isfinite(rho) && rho > 0)) throw InvalidParameter("rho must be positive");
  if (!(std::isfinite(lambda) && lambda > 0)) throw InvalidParameter("lambda must be positive");
  if (!a.allFinite()) throw InvalidParameter("effect coefficients must be finite");
  if (!(a[kGateSoftness] > 0)) throw InvalidParameter("a4 (gate softness) must be positive");
  if (!(a[kBrightCeiling] > 0)) throw InvalidParameter("a6 (brightness ceiling) must be positive");
  if (!(eps_scale > 0)) throw InvalidParameter("eps_scale must be positive");
}

EffectValues effects(double freq, double amp, double pdur, const PatientParams& phi) {
  return effects(freq, amp, pdur, phi, nullptr);
}

EffectValues effects(double freq, double amp, double pdur, const PatientParams& phi,
                     EffectJacobian* jac) {
  const auto& a = phi.a;
  const double q = a[kChargeIntercept] + a[kChargeSlope] * pdur;
  const double z = a[kAmpGain] * amp * q + a[kFreqGain] * freq;
  const double ceil = a[kBrightCeiling], leak = a[kBrightLeak];
  const double th = std::tanh(z / ceil);
  const double sat = (1.0 - leak) * ceil * th + leak * z;
  const double prod = amp * freq;
  const double denom = prod + a[kGateSoftness];
  const double gate = prod / denom;

  EffectValues out;
  out.bright = gate * sat;
  const double size_raw = 1.0 + a[kSizeSlope] * (amp - 1.0);
  const double streak_raw = a[kStreakIntercept] - a[kStreakSlope] * pdur;
  out.size = std::max(size_raw, phi.eps_scale);
  out.streak = std::max(streak_raw, phi.eps_scale);

  if (jac) {
    const double dsat = (1.0 - leak) * (1.0 - th * th) + leak;
    const double dgate = a[kGateSoftness] / (denom * denom);
    jac->setZero();
    (*jac)(0, kFreq) = dgate * amp * sat + gate * dsat * a[kFreqGain];
    (*jac)(0, kAmp) = dgate * freq * sat + gate * dsat * a[kAmpGain] * q;
    (*jac)(0, kPdur) = gate * dsat * a[kAmpGain] * amp * a[kChargeSlope];
    (*jac)(1, kAmp) = size_raw > phi.eps_scale ? a[kSizeSlope] : 0.0;
    (*jac)(2, kPdur) = streak_raw > phi.eps_scale ? -a[kStreakSlope] : 0.0;
  }
  return out;
}

}  // namespace phosphene
