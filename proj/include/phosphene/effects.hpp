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

#pragma once

#include <Eigen/Core>

#include "phosphene/common.hpp"

namespace phosphene {

// Effect coefficients a0..a9.
enum Coefficient : int {
  kChargeSlope = 0,      // a0 [1/ms]: pulse-duration slope of the charge factor
  kChargeIntercept = 1,  // a1: charge factor at zero pulse duration
  kAmpGain = 2,          // a2: brightness sensitivity to amplitude
  kFreqGain = 3,         // a3 [1/Hz]: brightness sensitivity to frequency
  kGateSoftness = 4,     // a4 [xTh*Hz]: softness of the amp*freq visibility gate
  kSizeSlope = 5,        // a5: radial spread growth per threshold multiple
  kBrightCeiling = 6,    // a6: saturation level of the brightness drive
  kStreakIntercept = 7,  // a7: streak factor at zero pulse duration
  kStreakSlope = 8,      // a8 [1/ms]: streak reduction per ms of pulse duration
  kBrightLeak = 9,       // a9: slope of brightness past saturation
};

inline constexpr double kDefaultEpsScale = 1e-3;

// Patient description: radial decay rho, axonal decay lambda and the ten
// effect coefficients, twelve parameters in total.
struct PatientParams {
  static constexpr int kCoefficientCount = 10;
  static constexpr int kParamCount = 12;
  using Coefficients = Eigen::Matrix<double, kCoefficientCount, 1>;
  using Vector = Eigen::Matrix<double, kParamCount, 1>;

  double rho = 300.0;     // microns
  double lambda = 800.0;  // microns
  Coefficients a = default_coefficients();
  // Numerical floor on the size and streak factors; a model setting, not a
  // patient parameter.
  double eps_scale = kDefaultEpsScale;

  static Coefficients default_coefficients();
  static PatientParams with(double rho, double lambda) {
    PatientParams p;
    p.rho = rho;
    p.lambda = lambda;
    return p;
  }

  // [rho, lambda, a0, ..., a9]
  Vector as_vector() const;
  static PatientParams from_vector(const Vector& v);

  // Throws InvalidParameter unless rho, lambda, a4, a6 > 0 and all finite.
  void validate() const;

  friend bool operator==(const PatientParams& l, const PatientParams& r) {
    return l.rho == r.rho && l.lambda == r.lambda && l.a == r.a && l.eps_scale == r.eps_scale;
  }
};

struct EffectValues {
  double bright = 0.0;
  double size = 1.0;
  double streak = 1.0;
};

// Row i = (bright, size, streak), column j = (freq, amp, pdur).
using EffectJacobian = Eigen::Matrix3d;

// Stimulus-dependent scalings of brightness, radial spread and axonal streak.
//
//   charge   q = a1 + a0 * pdur
//   drive    z = a2 * amp * q + a3 * freq
//   gate     g = amp*freq / (amp*freq + a4)
//   F_bright = g * ((1 - a9) * a6 * tanh(z / a6) + a9 * z)
//   F_size   = max(eps, 1 + a5 * (amp - 1))
//   F_streak = max(eps, a7 - a8 * pdur)
//
// F_bright is exactly zero when amp or freq is zero and nondecreasing in both;
// with the default coefficients it is ~1 at (20 Hz, 1 xTh, 0.45 ms).
EffectValues effects(double freq, double amp, double pdur, const PatientParams& phi);
EffectValues effects(double freq, double amp, double pdur, const PatientParams& phi,
                     EffectJacobian* jacobian);

template <typename Derived>
EffectValues effects(const Eigen::MatrixBase<Derived>& s_e, const PatientParams& phi) {
  return effects(s_e(kFreq), s_e(kAmp), s_e(kPdur), phi);
}

}  // namespace phosphene
