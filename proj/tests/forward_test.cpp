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
#include <numeric>

#include "gtest/gtest.h"

namespace phosphene {
namespace {

Stimulus random_stimulus(Rng& rng, int n, double p_off = 0.3) {
  Stimulus s(n, 3);
  for (int e = 0; e < n; ++e) {
    const bool off = uniform01(rng) < p_off;
    s(e, kFreq) = off ? 0.0 : uniform(rng, 5, 150);
    s(e, kAmp) = off ? 0.0 : uniform(rng, 0.5, 6);
    s(e, kPdur) = uniform(rng, 0.1, 1.5);
  }
  return s;
}

struct Scene {
  ImplantLayout layout = build_implant(3, 3, 400, 75);
  AxonMapGrid map = build_axon_map({9, 9}, 1400, 40);
};

TEST(Effects, ZeroAmplitudeOrFrequencyIsInvisible) {
  const PatientParams phi;
  EXPECT_EQ(effects(0.0, 3.0, 0.45, phi).bright, 0.0);
  EXPECT_EQ(effects(20.0, 0.0, 0.45, phi).bright, 0.0);
  EXPECT_EQ(effects(0.0, 0.0, 0.0, phi).bright, 0.0);
}

TEST(Effects, UnitStimulusGivesUnitScaleBrightness) {
  const auto fx = effects(20.0, 1.0, 0.45, PatientParams{});
  EXPECT_NEAR(fx.bright, 1.0, 0.05);
  EXPECT_DOUBLE_EQ(fx.size, 1.0);
  EXPECT_NEAR(fx.streak, 1.1 - 0.2 * 0.45, 1e-12);
}

TEST(Effects, BrightnessNondecreasingInAmpAndFreq) {
  const PatientParams phi;
  for (double pdur : {0.1, 0.45, 2.0}) {
    double prev = -1;
    for (double amp = 0; amp <= 10; amp += 0.25) {
      const double b = effects(40.0, amp, pdur, phi).bright;
      EXPECT_GE(b, prev);
      prev = b;
    }
    prev = -1;
    for (double freq = 0; freq <= 200; freq += 5) {
      const double b = effects(freq, 2.0, pdur, phi).bright;
      EXPECT_GE(b, prev);
      prev = b;
    }
  }
}

TEST(Effects, JacobianMatchesFiniteDifferences) {
  Rng rng(21);
  const PatientParams phi;
  for (int k = 0; k < 50; ++k) {
    const double x[3] = {uniform(rng, 1, 200), uniform(rng, 0.2, 10), uniform(rng, 0.05, 3)};
    EffectJacobian jac;
    effects(x[0], x[1], x[2], phi, &jac);
    for (int j = 0; j < 3; ++j) {
      double hi[3] = {x[0], x[1], x[2]}, lo[3] = {x[0], x[1], x[2]};
      const double h = 1e-6 * std::max(1.0, x[j]);
      hi[j] += h;
      lo[j] -= h;
      const auto fp = effects(hi[0], hi[1], hi[2], phi), fm = effects(lo[0], lo[1], lo[2], phi);
      const double fd[3] = {(fp.bright - fm.bright) / (2 * h), (fp.size - fm.size) / (2 * h),
                            (fp.streak - fm.streak) / (2 * h)};
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(jac(i, j), fd[i], 1e-6 * (1 + std::abs(fd[i])));
    }
  }
}

TEST(PatientParams, VectorRoundTrip) {
  PatientParams p = PatientParams::with(250, 1300);
  p.a[kSizeSlope] = 0.7;
  EXPECT_EQ(PatientParams::from_vector(p.as_vector()), p);
  EXPECT_EQ(p.as_vector().size(), 12);
}

TEST(PatientParams, RejectsNonPositiveDecay) {
  EXPECT_THROW(PatientParams::with(0, 100).validate(), InvalidParameter);
  EXPECT_THROW(PatientParams::with(100, -1).validate(), InvalidParameter);
  EXPECT_NO_THROW(PatientParams::with(100, 100).validate());
}

TEST(Render, MatchesReferenceImplementation) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Rng rng(1);
  for (int k = 0; k < 5; ++k) {
    const auto s = random_stimulus(rng, 9);
    const auto phi = PatientParams::with(uniform(rng, 100, 800), uniform(rng, 100, 2000));
    const Percept fast = render(s, phi, kernel);
    const Percept ref = render_reference(s, phi, sc.map, sc.layout);
    ASSERT_EQ(fast.rows(), 9);
    for (Eigen::Index i = 0; i < fast.size(); ++i) {
      EXPECT_NEAR(fast.data()[i], ref.data()[i], 1e-6 * std::max(1.0, std::abs(ref.data()[i])));
    }
  }
}

// Straight axons on the horizontal meridian: segments are soma + k * step
// along +x, so the model can be written out by hand.
TEST(Render, SingleElectrodeStraightAxonByHand) {
  const auto layout = build_implant(1, 1, 400, 75);
  const double step = 25.0;
  const auto map = build_axon_map({1, 5}, 300, 30, SpiralParams::straight(step));
  Stimulus s(1, 3);
  s << 30.0, 2.0, 0.45;
  const auto phi = PatientParams::with(200, 500);
  const Percept got = render(s, phi, RenderKernel<double>(map, layout));
  const auto fx = effects(30.0, 2.0, 0.45, phi);
  for (int c = 0; c < 5; ++c) {
    const double soma_x = -300 + c * 150.0;
    double best = 0;
    for (int k = 0; k < 30; ++k) {
      const double ax = soma_x + k * step;
      const double d = k * step;
      const double v = fx.bright * std::exp(-ax * ax / (2 * 200.0 * 200.0 * fx.size) -
                                            d * d / (2 * 500.0 * 500.0 * fx.streak));
      best = std::max(best, v);
    }
    EXPECT_NEAR(got(0, c), best, 1e-12) << "column " << c;
  }
  // A soma sitting on the electrode is at its brightest at the soma itself.
  EXPECT_NEAR(got(0, 2), fx.bright, 1e-12);
}

TEST(Render, ZeroStimulusIsBlack) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Stimulus s = Stimulus::Zero(9, 3);
  EXPECT_EQ(render(s, PatientParams{}, kernel).maxCoeff(), 0.0);
  s.col(kPdur).setConstant(0.45);
  s.col(kFreq).setConstant(50);  // amplitude still zero
  EXPECT_EQ(render(s, PatientParams{}, kernel).maxCoeff(), 0.0);
}

TEST(Render, PerceptIsNonnegative) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Rng rng(2);
  for (int k = 0; k < 5; ++k) {
    EXPECT_GE(render(random_stimulus(rng, 9), PatientParams{}, kernel).minCoeff(), 0.0);
  }
}

TEST(Render, ElectrodeOrderDoesNotMatter) {
  const Scene sc;
  Rng rng(3);
  const auto s = random_stimulus(rng, 9, 0.0);
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  ImplantLayout permuted = sc.layout;
  Stimulus sp(9, 3);
  for (int e = 0; e < 9; ++e) {
    permuted.electrode_positions.row(e) = sc.layout.electrode_positions.row(perm[e]);
    sp.row(e) = s.row(perm[e]);
  }
  const Percept a = render(s, PatientParams{}, RenderKernel<double>(sc.map, sc.layout));
  const Percept b = render(sp, PatientParams{}, RenderKernel<double>(sc.map, permuted));
  EXPECT_TRUE(a.isApprox(b, 1e-12));
}

TEST(Render, DistantElectrodeHasNoEffect) {
  // rho and lambda small relative to the electrode offset.
  auto layout = build_implant(1, 2, 6000, 75);
  const auto map = build_axon_map({7, 7}, 600, 40, {}, layout.electrode(0));
  Stimulus one(2, 3), both(2, 3);
  one << 20, 3, 0.45, 0, 0, 0.45;
  both << 20, 3, 0.45, 20, 3, 0.45;
  const auto phi = PatientParams::with(100, 150);
  const RenderKernel<double> kernel(map, layout);
  EXPECT_TRUE(render(one, phi, kernel).isApprox(render(both, phi, kernel), 1e-12));
}

TEST(Render, BrighterWithMoreAmplitude) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Stimulus s = Stimulus::Zero(9, 3);
  s(4, kFreq) = 20;
  s(4, kPdur) = 0.45;
  double prev = 0;
  for (double amp = 0.5; amp <= 8; amp += 0.5) {
    s(4, kAmp) = amp;
    const double peak = render(s, PatientParams{}, kernel).maxCoeff();
    EXPECT_GE(peak, prev);
    prev = peak;
  }
}

TEST(Render, RejectsBadInput) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  EXPECT_THROW(render(Stimulus::Zero(8, 3), PatientParams{}, kernel), DimensionError);
  Stimulus s = Stimulus::Zero(9, 3);
  s(0, kAmp) = -1;
  EXPECT_THROW(render(s, PatientParams{}, kernel), InvalidParameter);
  s(0, kAmp) = std::nan("");
  EXPECT_THROW(render(s, PatientParams{}, kernel), InvalidParameter);
  EXPECT_THROW(render(Stimulus::Zero(9, 3), PatientParams::with(0, 100), kernel), InvalidParameter);
}

TEST(Render, FloatKernelAgreesWithDouble) {
  const Scene sc;
  Rng rng(4);
  const auto s = random_stimulus(rng, 9);
  const auto d = render(s, PatientParams{}, RenderKernel<double>(sc.map, sc.layout));
  const auto f = render(s, PatientParams{}, RenderKernel<float>(sc.map, sc.layout)).cast<double>();
  EXPECT_LT((d - f).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, d.maxCoeff()));
}

TEST(Render, PruningChangesNothingVisible) {
  const Scene sc;
  Rng rng(5);
  PruneBounds bounds;
  bounds.rho_max = 400;
  bounds.lambda_max = 600;
  const RenderKernel<double> full(sc.map, sc.layout), pruned(sc.map, sc.layout, bounds);
  EXPECT_LT(pruned.n_entries(), full.n_entries());
  for (int k = 0; k < 5; ++k) {
    const auto s = random_stimulus(rng, 9);
    const auto phi = PatientParams::with(uniform(rng, 100, 400), uniform(rng, 100, 600));
    const Percept a = render(s, phi, full), b = render(s, phi, pruned);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
  }
}

double weighted_sum(const Stimulus& s, const PatientParams& phi, const RenderKernel<double>& kernel,
                    const Percept& up) {
  return (render(s, phi, kernel).array() * up.array()).sum();
}

TEST(RenderWithGrad, MatchesFiniteDifferences) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Rng rng(6);
  for (int k = 0; k < 4; ++k) {
    const auto s = random_stimulus(rng, 9, 0.0);
    const auto phi = PatientParams::with(uniform(rng, 150, 600), uniform(rng, 200, 1500));
    Percept up(9, 9);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = uniform(rng, -1, 1);
    const auto res = render_with_grad(s, phi, kernel, up);
    EXPECT_TRUE(res.percept.isApprox(render(s, phi, kernel), 1e-12));
    const double scale = res.grad.cwiseAbs().maxCoeff();
    for (int e = 0; e < 9; ++e) {
      for (int j = 0; j < 3; ++j) {
        Stimulus hi = s, lo = s;
        const double h = 1e-6 * std::max(1.0, s(e, j));
        hi(e, j) += h;
        lo(e, j) -= h;
        const double fd = (weighted_sum(hi, phi, kernel, up) - weighted_sum(lo, phi, kernel, up)) / (2 * h);
        EXPECT_LE(std::abs(fd - res.grad(e, j)), 1e-4 * std::max(std::abs(fd), 1e-3 * scale))
            << "electrode " << e << " column " << j;
      }
    }
  }
}

TEST(RenderWithGrad, ForwardDifferenceAtTheOrigin) {
  // Negative stimuli are rejected, so check the one-sided derivative at zero.
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Stimulus s = Stimulus::Zero(9, 3);
  s(4, kFreq) = 20;
  s(4, kAmp) = 2;
  s(4, kPdur) = 0.45;
  s(0, kPdur) = 0.45;
  s(0, kFreq) = 30;  // amplitude exactly zero on electrode 0
  const Percept up = Percept::Ones(9, 9);
  const auto res = render_with_grad(s, PatientParams{}, kernel, up);
  const double h = 1e-7;
  Stimulus hi = s;
  hi(0, kAmp) += h;
  const double fd = (weighted_sum(hi, PatientParams{}, kernel, up) - weighted_sum(s, PatientParams{}, kernel, up)) / h;
  EXPECT_GT(res.grad(0, kAmp), 0.0);
  EXPECT_NEAR(res.grad(0, kAmp), fd, 1e-4 * std::abs(fd) + 1e-6);
}

TEST(Render, LinearInElectrodesForSingleSegmentAxons) {
  // With one segment per axon the max is trivial and the sum over electrodes
  // splits across disjoint stimuli.
  const auto layout = build_implant(2, 2, 300, 50);
  AxonMapGrid map = build_axon_map({5, 5}, 700, 2, SpiralParams::straight());
  for (auto& t : map.trajectories) {
    t.segments.conservativeResize(1, 2);
    t.cum_length.conservativeResize(1);
  }
  const RenderKernel<double> kernel(map, layout);
  Stimulus a = Stimulus::Zero(4, 3), b = Stimulus::Zero(4, 3);
  a.row(0) << 20, 2, 0.45;
  a.row(3) << 60, 1, 0.3;
  b.row(1) << 35, 4, 0.8;
  const auto phi = PatientParams::with(250, 700);
  const Percept sum = render(a, phi, kernel) + render(b, phi, kernel);
  EXPECT_TRUE(render(Stimulus(a + b), phi, kernel).isApprox(sum, 1e-12));
}

TEST(RenderWithGrad, ZeroUpstreamGivesZeroGradient) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  Rng rng(9);
  const auto res = render_with_grad(random_stimulus(rng, 9), PatientParams{}, kernel, Percept::Zero(9, 9));
  EXPECT_EQ(res.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RenderWithGrad, RejectsWrongUpstreamShape) {
  const Scene sc;
  const RenderKernel<double> kernel(sc.map, sc.layout);
  EXPECT_THROW(render_with_grad(Stimulus::Zero(9, 3), PatientParams{}, kernel, Percept::Zero(3, 3)),
               DimensionError);
}

TEST(PhospheneModel, ImplementsForwardModel) {
  const Scene sc;
  const PhospheneModel<double> model(sc.map, sc.layout);
  const ForwardModel& fm = model;
  EXPECT_EQ(fm.n_electrodes(), 9);
  EXPECT_EQ(fm.height(), 9);
  Rng rng(8);
  const auto s = random_stimulus(rng, 9);
  EXPECT_TRUE(fm.render(s, PatientParams{}).isApprox(render(s, PatientParams{}, model.kernel())));
}

}  // namespace
}  // namespace phosphene
