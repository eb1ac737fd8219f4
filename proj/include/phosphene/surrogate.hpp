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

// Learned stand-in for the forward model, fitted to random stimuli for one
// patient, and the diagnostic measuring how far an encoder trained against it
// drifts from the true model.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "phosphene/common.hpp"
#include "phosphene/data.hpp"
#include "phosphene/effects.hpp"
#include "phosphene/encoders.hpp"
#include "phosphene/forward.hpp"
#include "phosphene/losses.hpp"
#include "phosphene/nn.hpp"

namespace phosphene {

// ---- dataset --------------------------------------------------------------

// Each sample drives `active` electrodes with amp and freq drawn uniformly
// from their ranges, plus `noise` further electrodes where exactly one of amp
// and freq is nonzero (which one is a fair coin). The noise count is capped
// by the electrodes left after the active ones. Every driven electrode gets
// the fixed pulse duration; undriven rows are zero.
struct SurrogateDatasetSpec {
  int n_samples = 50000;
  int active_min = 1, active_max = 30;
  Range amp{1.0, 10.0};
  Range freq{1.0, 200.0};
  int noise_min = 10, noise_max = 100;
  double pdur = kNaivePulseDuration;
  double train_fraction = 0.8;

  void validate() const;
};

struct SurrogateDataset {
  PatientParams phi;
  std::vector<Stimulus> stimuli;
  std::vector<Percept> percepts;
  std::size_t n_train = 0;  // the first n_train samples are the training split

  std::size_t size() const { return stimuli.size(); }

  // Directory layout:
  //   manifest.json   {"n_samples", "n_train", "height", "width",
  //                    "n_electrodes", "phi": [12 values], "stimuli",
  //                    "percepts"}
  //   stimuli.csv     sample,electrode,freq_hz,amp_xth,pdur_ms
  //   percepts.f32    char[4] "PFST", u32 version (1), u32 N, u32 H, u32 W,
  //                   f32 data[N][H][W], little-endian
  void save(const std::filesystem::path& dir) const;
  static SurrogateDataset load(const std::filesystem::path& dir);
};

// Draws one stimulus within the dataset ranges.
Stimulus random_surrogate_stimulus(const SurrogateDatasetSpec& spec, int n_electrodes, Rng& rng);

SurrogateDataset gen_surrogate_dataset(const SurrogateDatasetSpec& spec, const PatientParams& phi,
                                       const ForwardModel& fwd, std::uint64_t seed);

// ---- network --------------------------------------------------------------

struct SurrogateSpec {
  int height = 49;
  int width = 49;
  int n_electrodes = 225;
  int amp_width = 256;
  int freq_width = 256;
  int hidden_width = 512;  // FC on the concatenated amp / freq features
  int product_width = 256;
  // Inputs are divided by these before the first layers.
  double amp_norm = 10.0;
  double freq_norm = 200.0;
  double product_norm = 2000.0;

  void validate() const;
  long parameter_count() const;
  static SurrogateSpec desk(int height, int width, int n_electrodes);

  friend bool operator==(const SurrogateSpec&, const SurrogateSpec&) = default;
};

//   a = lrelu(FC(amp)),  f = lrelu(FC(freq)),  h = lrelu(FC([a; f]))
//   p = lrelu(FC(amp .* freq))
//   percept = max(0, FC([h; p]))
// Pulse duration is ignored. The network is tied to the patient it was
// fitted for.
class SurrogateNet {
 public:
  SurrogateNet() = default;
  SurrogateNet(const SurrogateSpec& spec, const PatientParams& phi, std::uint64_t seed);

  const SurrogateSpec& spec() const { return spec_; }
  const PatientParams& phi() const { return phi_; }

  // Unclamped output, (H*W) x B; training mode caches for backward().
  nn::Matrix forward(const std::vector<Stimulus>& stimuli);
  nn::Matrix infer_raw(const std::vector<Stimulus>& stimuli) const;
  void backward(const nn::Matrix& d_out);

  // Clamped percepts.
  std::vector<Percept> infer(const std::vector<Stimulus>& stimuli) const;
  // Clamped percept and d(sum(upstream .* percept))/d(stimulus); leaves the
  // parameter gradients untouched.
  RenderGradResult render_with_grad(const Stimulus& s, const Percept& upstream) const;

  nn::ParamList params();
  void zero_weights();

  void save(const std::filesystem::path& path) const;
  static SurrogateNet load(const std::filesystem::path& path);

 private:
  struct Inputs {
    nn::Matrix amp, freq, prod;
  };
  Inputs split(const std::vector<Stimulus>& stimuli) const;
  std::vector<nn::Dense*> layers();

  SurrogateSpec spec_;
  PatientParams phi_;
  nn::Dense fc_amp_, fc_freq_, fc_hidden_, fc_prod_, fc_out_;
  struct Cache {
    nn::Matrix a_pre, f_pre, h_pre, p_pre;
  } cache_;
};

// Throws ContractError when `phi` differs from the network's patient.
Percept surrogate_render(const Stimulus& s, const SurrogateNet& net);
Percept surrogate_render(const Stimulus& s, const PatientParams& phi, const SurrogateNet& net);

// ForwardModel view of a surrogate, for encoder training.
class SurrogateModel final : public ForwardModel {
 public:
  explicit SurrogateModel(const SurrogateNet& net) : net_(net) {}
  int n_electrodes() const override { return net_.spec().n_electrodes; }
  int height() const override { return net_.spec().height; }
  int width() const override { return net_.spec().width; }
  Percept render(const Stimulus& s, const PatientParams& phi) const override;
  RenderGradResult render_with_grad(const Stimulus& s, const PatientParams& phi,
                                    const Percept& upstream) const override;

 private:
  const SurrogateNet& net_;
};

struct SurrogateTrainConfig {
  int epochs = 45;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SurrogateEpoch {
  int epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
};

// CSV with header `epoch,train_mae,val_mae`.
void write_surrogate_log(const std::vector<SurrogateEpoch>& log, std::ostream& os);
void write_surrogate_log(const std::vector<SurrogateEpoch>& log, const std::filesystem::path& path);

struct SurrogateTrainResult {
  SurrogateNet net;
  std::vector<SurrogateEpoch> log;  // epoch 0 is the untrained network
  double val_mae = 0.0;             // of the returned network, clamped output
};

// Mean absolute error of the clamped surrogate on samples [begin, end).
double surrogate_mae(const SurrogateNet& net, const SurrogateDataset& data, std::size_t begin, std::size_t end);

// AdamW on the pixel MAE of the unclamped output. Returns the final weights.
SurrogateTrainResult train_surrogate(SurrogateNet net, const SurrogateDataset& data,
                                     const SurrogateTrainConfig& cfg);

// ---- exploitation gap -----------------------------------------------------

struct GapRecord {
  std::string target_id;
  double gap_mae = 0.0;          // mae(surrogate_render(s), render(s))
  double joint_true = 0.0;       // joint(target, render(s))
  double joint_surrogate = 0.0;  // joint(target, surrogate_render(s))
};

struct GapReport {
  std::vector<GapRecord> records;
  double mean_gap_proposed = 0.0;
  double mean_gap_random = 0.0;
};

// Gap of the stimuli proposed for `targets` against that of `random`
// stimuli. Joint losses use kReportingWeights.
GapReport exploit_gap(const std::vector<Stimulus>& proposed, const TargetSet& targets,
                      const std::vector<Stimulus>& random, const SurrogateNet& net, const ForwardModel& fwd,
                      const FeatureExtractor* fx);
// Proposals from `encoder` at the surrogate's patient; `n_random` random
// stimuli drawn from `spec` with `seed`.
GapReport exploit_gap(const EncoderNet& encoder, const SurrogateNet& net, const ForwardModel& fwd,
                      const TargetSet& targets, const FeatureExtractor* fx, const SurrogateDatasetSpec& spec,
                      std::size_t n_random, std::uint64_t seed);

// CSV with header `target_id,gap_mae,joint_true,joint_surrogate`.
void write_gap_report(const GapReport& report, std::ostream& os);
void write_gap_report(const GapReport& report, const std::filesystem::path& path);

}  // namespace phosphene
