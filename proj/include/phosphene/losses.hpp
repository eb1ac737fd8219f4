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

// Perceptual losses between a target t and a predicted percept t_hat:
//
//   joint = mae + alpha * smooth + beta * feature
//
// Every term comes with its gradient with respect to t_hat.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "phosphene/common.hpp"
#include "phosphene/nn.hpp"

namespace phosphene {

struct LossWeights {
  double alpha = 0.0;
  double beta = 0.0;
};

// Weights used whenever loss values are reported.
inline constexpr LossWeights kReportingWeights{0.0, 0.00008};

// Mean absolute pixel difference.
double mae(const Percept& t, const Percept& t_hat);
Percept mae_grad(const Percept& t, const Percept& t_hat);

// ---- Laplacian smoothness -------------------------------------------------

enum class SmoothMode { kAbsolute, kSigned };

// k x k Laplacian: d2 (x) s + s (x) d2, where s is the length-k binomial row
// and d2 = [1, -2, 1] convolved with the length-(k-2) binomial row. k = 3
// gives [[2, 0, 2], [0, -8, 0], [2, 0, 2]]. Entries sum to zero.
Eigen::MatrixXd laplacian_kernel(int k);

// Filter response with reflect-101 borders (dcb|abcd|cba).
Percept laplacian_response(const Percept& img, int k);

// Mean over pixels of |response| (absolute mode) or of the response (signed).
double laplacian_smooth(const Percept& t_hat, int k = 5, SmoothMode mode = SmoothMode::kAbsolute);
Percept laplacian_smooth_grad(const Percept& t_hat, int k = 5, SmoothMode mode = SmoothMode::kAbsolute);

// ---- feature extractor ----------------------------------------------------

struct LayerSpec {
  enum class Kind { kConv, kRelu, kAvgPool };
  Kind kind = Kind::kConv;
  std::string name;
  int in = 0, out = 0, k = 0;  // conv only
};

// Fixed conv/relu/avg-pool stack read up to a tap layer. A grayscale percept
// is replicated across the first layer's input channels.
//
// Weight file: tensor container with text tensor "layers" (one line per layer:
// `conv NAME IN OUT K`, `relu NAME`, `avgpool NAME`), optional text tensor
// "tap", and for every conv layer NAME.weight {OUT, IN*K*K} and NAME.bias
// {OUT, 1}.
class FeatureExtractor {
 public:
  FeatureExtractor(std::vector<LayerSpec> layers, std::vector<nn::Matrix> weights,
                   std::vector<nn::Vector> biases, std::string tap);

  // conv1_1(3->8, 3x3) relu1_1 pool1 conv2_1(8->16, 3x3) relu2_1, He-normal
  // weights from `seed`, tapped at relu2_1.
  static FeatureExtractor random_default(std::uint64_t seed = 1234);
  // Single 1x1 convolution with weight 1: features are the pixels.
  static FeatureExtractor identity();
  static FeatureExtractor load(const std::filesystem::path& path, const std::string& tap = "");
  void save(const std::filesystem::path& path) const;

  // Activations at the tap layer, channels x (h' * w').
  nn::Matrix features(const Percept& img) const;
  // d/d(img) of <dfeat, features(img)>.
  Percept backward(const Percept& img, const nn::Matrix& dfeat) const;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::string& tap() const { return tap_; }
  int input_channels() const { return layers_.front().in; }
  // Conv weights (out x in*k*k) and biases of layer i; empty otherwise.
  const nn::Matrix& weight(int i) const { return weights_[i]; }
  const nn::Vector& bias(int i) const { return biases_[i]; }

 private:
  int tap_index() const;

  std::vector<LayerSpec> layers_;
  std::vector<nn::Matrix> weights_;  // per layer; empty for non-conv layers
  std::vector<nn::Vector> biases_;
  std::string tap_;
};

// Mean squared difference of tap activations.
double feature_loss(const Percept& t, const Percept& t_hat, const FeatureExtractor& fx);
Percept feature_loss_grad(const Percept& t, const Percept& t_hat, const FeatureExtractor& fx);

// ---- joint ----------------------------------------------------------------

struct LossConfig {
  LossWeights weights;
  int laplacian_k = 5;
  SmoothMode smooth_mode = SmoothMode::kAbsolute;
};

struct LossTerms {
  double mae = 0.0;
  double smooth = 0.0;
  double feature = 0.0;
  double joint = 0.0;
};

// All components are always evaluated (for logging); `fx` may be null, in
// which case the feature term is 0. When `grad` is given it receives
// d(joint)/d(t_hat).
LossTerms evaluate_loss(const Percept& t, const Percept& t_hat, const LossConfig& cfg,
                        const FeatureExtractor* fx, Percept* grad = nullptr);

double joint(const Percept& t, const Percept& t_hat, const LossWeights& w, const FeatureExtractor& fx);

// ---- schedule -------------------------------------------------------------

struct LossPhase {
  int start_epoch = 0;
  double alpha = 0.0;
  double beta = 0.0;
};

// Phases must start at epoch 0, have increasing start epochs, nondecreasing
// beta and nonincreasing alpha. After every beta increase the learning-rate
// multiplier is divided by warmup_lr_divisor for warmup_length epochs, then
// set to post_warmup_lr_factor times its value before the increase.
struct LossSchedule {
  std::vector<LossPhase> phases{{0, 0.0, 0.0}};
  double warmup_lr_divisor = 10.0;
  double post_warmup_lr_factor = 0.5;
  int warmup_length = 1;

  void validate() const;
  // Eight phases, beta from 0 to 8e-5, alpha from initial_alpha down to 0.
  static LossSchedule default_schedule(int epochs_per_phase = 5, double initial_alpha = 0.005);
};

struct ScheduleStep {
  LossWeights weights;
  double lr_multiplier = 1.0;
  int phase = 0;
};

ScheduleStep schedule_step(const LossSchedule& sched, int epoch);

}  // namespace phosphene
