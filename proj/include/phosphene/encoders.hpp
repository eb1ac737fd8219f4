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

// Stimulus encoders: the naive pixel-sampling baseline, the learned
// feed-forward encoder and its training loop, a per-target gradient-descent
// inverter, and a digit classifier for recognition accuracy.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "phosphene/common.hpp"
#include "phosphene/data.hpp"
#include "phosphene/effects.hpp"
#include "phosphene/forward.hpp"
#include "phosphene/losses.hpp"
#include "phosphene/nn.hpp"
#include "phosphene/retina.hpp"

namespace phosphene {

// ---- naive ----------------------------------------------------------------

inline constexpr double kNaiveFrequency = 20.0;      // Hz
inline constexpr double kNaivePulseDuration = 0.45;  // ms

// Row-major index of the pixel nearest to each electrode.
std::vector<int> electrode_pixels(const ImplantLayout& layout, const AxonMapGrid& map);

// amp_e = t at electrode e's pixel; rows with amp_e > 0 get 20 Hz and
// 0.45 ms, the others are all zero. Negative pixels count as 0.
Stimulus naive_encode(const Percept& t, const std::vector<int>& pixels);
Stimulus naive_encode(const Percept& t, const ImplantLayout& layout, const AxonMapGrid& map);

// ---- learned encoder ------------------------------------------------------

// Layer widths and output scalings of EncoderNet.
struct EncoderSpec {
  int height = 49;
  int width = 49;
  int n_electrodes = 225;
  int target_width = 350;  // FC on the flattened target
  int phi_width = 32;      // both FCs of the patient path
  int trunk_width = 512;   // FC after the concat
  int x_width = 256;       // intermediate representation x
  double amp_scale = 2.0;
  double freq_scale = 20.0;
  double pdur_shift = 1e-3;
  // Stimulus heads: weights uniform in +-head_init_scale * sqrt(3 / fan_in),
  // biases set so the untrained output is a dim 20 Hz / 0.45 ms pattern.
  double head_init_scale = 0.3;
  double amp_bias = 0.05;
  double freq_bias = 1.0;
  double pdur_bias = 0.45;

  void validate() const;
  long parameter_count() const;
  // Smaller widths for CPU-scale runs.
  static EncoderSpec desk(int height, int width, int n_electrodes);

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

// Patient parameters as fed to the network: each entry divided by its
// default value, minus one. The default patient maps to zero.
Eigen::Matrix<double, PatientParams::kParamCount, 1> normalize_phi(const PatientParams& phi);

//   a  = lrelu(FC(flatten t))
//   p  = lrelu(FC(lrelu(FC(BN(phi)))))
//   x  = lrelu(FC(lrelu(FC([a; p]))))
//   amp_raw = relu(FC(x))
//   c  = BN([x; amp_raw])
//   freq = freq_scale * relu(FC(c)),  amp = amp_scale * amp_raw,
//   pdur = relu(FC(c)) + pdur_shift
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(const EncoderSpec& spec, std::uint64_t seed);

  const EncoderSpec& spec() const { return spec_; }
  long parameter_count() const { return spec_.parameter_count(); }

  // Batched evaluation. `targets` is (H*W) x B (row-major pixels per column),
  // `phis` is 12 x B of normalized parameters. Training mode uses batch
  // statistics and caches activations for backward().
  std::vector<Stimulus> forward(const nn::Matrix& targets, const nn::Matrix& phis, bool training);
  std::vector<Stimulus> infer(const nn::Matrix& targets, const nn::Matrix& phis) const;
  // Accumulates parameter gradients from dL/d(stimulus) of the last
  // training-mode forward.
  void backward(const std::vector<StimulusGrad>& grads);

  nn::ParamList params();
  // Zeroes the weights and biases of the three stimulus heads.
  void zero_heads();

  void save(const std::filesystem::path& path) const;
  static EncoderNet load(const std::filesystem::path& path);

 private:
  struct Cache {
    nn::Matrix a_pre, p1_pre, p2_pre, h_pre, x_pre, amp_pre, f_pre, d_pre;
  };
  std::vector<Stimulus> assemble(const nn::Matrix& f_pre, const nn::Matrix& amp_raw, const nn::Matrix& d_pre) const;
  void check_inputs(const nn::Matrix& targets, const nn::Matrix& phis) const;

  EncoderSpec spec_;
  nn::Dense fc_t_, fc_p1_, fc_p2_, fc_1_, fc_2_, fc_amp_, fc_freq_, fc_pdur_;
  nn::BatchNorm bn_p_, bn_c_;
  Cache cache_;
};

nn::Matrix stack_targets(const std::vector<Percept>& targets);
nn::Matrix stack_phis(const std::vector<PatientParams>& phis);

// Inference-mode encoding of one target.
Stimulus encode(const EncoderNet& net, const Percept& t, const PatientParams& phi);
std::vector<Stimulus> encode(const EncoderNet& net, const std::vector<Percept>& targets,
                             const std::vector<PatientParams>& phis);

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 0.003;
  double momentum = 0.9;
  int epochs = 40;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables
  PatientRanges sampler;
  LossSchedule schedule;
  int laplacian_k = 5;
  SmoothMode smooth_mode = SmoothMode::kAbsolute;

  void validate() const;
};

// One row of the training log. `joint` always uses kReportingWeights.
struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  LossTerms terms;
};

// CSV with header `epoch,split,mae,smooth,feature,joint`.
void write_training_log(const std::vector<EpochRecord>& log, std::ostream& os);
void write_training_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

struct TrainResult {
  EncoderNet net;  // best validation snapshot
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val_joint = 0.0;
};

// Called after every epoch with the current (not best) network.
using EpochCallback = std::function<void(int epoch, const EncoderNet& net)>;

// Fixed per-item patients for a validation set, drawn from `ranges`.
std::vector<PatientParams> validation_patients(const PatientRanges& ranges, std::size_t n, std::uint64_t seed);

// Mean loss terms of `stimuli` on `targets`, joint at kReportingWeights.
LossTerms mean_loss(const std::vector<Percept>& targets, const std::vector<Stimulus>& stimuli,
                    const std::vector<PatientParams>& phis, const ForwardModel& fwd, const FeatureExtractor* fx,
                    int laplacian_k = 5, SmoothMode mode = SmoothMode::kAbsolute);

// Trains from the weights of `net` with minibatch SGD. Epoch 0
// of the log is the validation loss of the initial weights; epochs 1..E carry
// a train row (means over the epoch's batches) and a val row. Throws
// DivergenceError naming the epoch and batch when a loss or weight becomes
// non-finite.
TrainResult train_encoder(EncoderNet net, const TargetSet& train, const TargetSet& val, const ForwardModel& fwd,
                          const FeatureExtractor* fx, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// ---- direct inversion -----------------------------------------------------

struct InvertConfig {
  int steps = 500;
  double learning_rate = 0.05;
  double growth = 1.2;   // step multiplier after an accepted step
  double backoff = 0.5;  // after a rejected one
  double min_learning_rate = 1e-12;
  // Per-column step preconditioner (freq, amp, pdur): the update is
  // -lr * scale^2 .* grad.
  Eigen::RowVector3d column_scale{20.0, 1.0, 0.45};
  // Give zero rows 20 Hz / 0.45 ms before starting. The loss is unchanged
  // (amp = 0 renders nothing) but the amplitude gradient becomes nonzero.
  bool fill_support = true;
  LossConfig loss{kReportingWeights, 5, SmoothMode::kAbsolute};
};

struct InvertResult {
  Stimulus stimulus;       // best iterate
  LossTerms initial;
  LossTerms terms;         // of the best iterate
  std::vector<double> history;  // best joint after each step
  int accepted = 0;
  bool warning = false;    // a non-finite loss was met or the step underflowed
};

// Projected gradient descent on the stimulus (projection: clamp at 0) with
// step backoff. The returned loss never exceeds the initial one.
InvertResult invert_direct(const Percept& t, const PatientParams& phi, const Stimulus& init, const ForwardModel& fwd,
                           const FeatureExtractor* fx, const InvertConfig& cfg = {});

// ---- recognition accuracy -------------------------------------------------

// conv3x3(1->8) relu pool conv3x3(8->16) relu pool dense(-> 10).
class Classifier {
 public:
  static constexpr int kClasses = 10;

  Classifier() = default;
  Classifier(int height, int width, std::uint64_t seed);

  int height() const { return height_; }
  int width() const { return width_; }

  // Softmax cross-entropy with AdamW, minibatches of 32. Unfreezes.
  void train(const TargetSet& set, int epochs, double learning_rate, std::uint64_t seed);
  nn::Vector logits(const Percept& img) const;
  int predict(const Percept& img) const;
  double accuracy(const std::vector<Percept>& images, const std::vector<int>& labels) const;

  // Records the accuracy on `targets` and freezes the weights.
  void freeze(const std::vector<Percept>& targets, const std::vector<int>& labels);
  bool frozen() const { return frozen_; }
  double target_accuracy() const { return target_accuracy_; }

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  nn::ParamList params();

  int height_ = 0, width_ = 0;
  nn::Conv2d conv1_, conv2_;
  nn::Dense fc_;
  bool frozen_ = false;
  double target_accuracy_ = 0.0;
};

inline constexpr double kMinClassifierAccuracy = 0.99;

// ACC(phosphenes) / ACC(targets). Throws ContractError unless the classifier
// is frozen with a recorded target accuracy of at least 0.99.
double recognition_accuracy(const std::vector<Percept>& phosphenes, const std::vector<int>& labels,
                            const Classifier& clf);

}  // namespace phosphene
