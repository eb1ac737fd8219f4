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

// Run configuration and the commands behind the `phosphene` tool. Every
// command writes into RunConfig::out and leaves the resolved config there as
// config.json.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phosphene/common.hpp"
#include "phosphene/data.hpp"
#include "phosphene/encoders.hpp"
#include "phosphene/forward.hpp"
#include "phosphene/losses.hpp"
#include "phosphene/retina.hpp"
#include "phosphene/surrogate.hpp"

namespace phosphene {

// Bad flags, missing inputs, inconsistent config. Exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitDivergence = 4 };

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  double display_ceiling = 2.0;

  struct Implant {
    int rows = 15, cols = 15;
    double pitch = 400.0;
    double electrode_radius = 75.0;
    RetinalPoint center;
  } implant;

  struct AxonMap {
    int height = 49, width = 49;
    int n_segments = 500;
    double field_extent = 0.0;  // 0: implant half-extent + 2 * largest rho in use
    RetinalPoint field_center;
    SpiralParams trajectory;
    std::filesystem::path cache;  // load if present, else build and save
    bool prune = false;
  } axon_map;

  // The patient for simulate / invert / surrogate, and for training when no
  // sampler is given.
  PatientParams phi;
  std::optional<PatientRanges> sampler;

  struct Loss {
    LossWeights report = kReportingWeights;
    int laplacian_k = 5;
    SmoothMode smooth_mode = SmoothMode::kAbsolute;
    std::filesystem::path feature_weights;  // empty: random_default(feature_seed)
    std::uint64_t feature_seed = 1234;
    std::string feature_tap;
  } loss;

  LossSchedule schedule = LossSchedule::default_schedule();
  EncoderSpec encoder;  // geometry fields follow implant / axon_map

  struct Train {
    int batch_size = 16;
    double learning_rate = 0.003;
    double momentum = 0.9;
    int epochs = 40;
    double clip_norm = 1.0;
    int checkpoint_every = 0;  // 0: final checkpoint only
  } train;

  struct Data {
    std::filesystem::path images, labels;  // IDX, optionally gzipped
    int limit = -1;
    double test_fraction = 0.2;
    double val_fraction = 0.125;  // of what the test split leaves
    std::uint64_t split_seed = 7;
    std::filesystem::path manifest;
    std::vector<std::string> categories;
    FilterThresholds thresholds;
  } data;

  InvertConfig invert;

  struct Surrogate {
    SurrogateDatasetSpec dataset;
    SurrogateSpec net;  // geometry fields follow implant / axon_map
    SurrogateTrainConfig train;
  } surrogate;

  struct Sweep {
    std::string axis = "rho_lambda";  // or "coefficients"
    std::vector<double> rho{150.0, 800.0};
    std::vector<double> lambda{100.0, 1500.0};
    std::vector<double> a2, a3, a5;  // empty: the patient's value
    int n_targets = 50;
  } sweep;

  struct Gap {
    int n_targets = 50;
    int n_random = 50;
  } gap;

  // Copies implant / axon-map geometry into the network specs and validates.
  void resolve();
  double field_extent() const;
  PatientRanges training_ranges() const;
  LossConfig report_loss() const { return {loss.report, loss.laplacian_k, loss.smooth_mode}; }
  TrainConfig train_config() const;
};

// Parses a JSON config. Unknown keys are a ParseError; absent keys keep their
// defaults. The result is resolved.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);
// Creates cfg.out and writes config.json into it.
void write_run_config(const RunConfig& cfg);

// Geometry and forward model built from a config.
class Scene {
 public:
  explicit Scene(const RunConfig& cfg);
  const ImplantLayout& layout() const { return layout_; }
  const AxonMapGrid& map() const { return map_; }
  const PhospheneModel<double>& model() const { return model_; }
  const std::vector<int>& pixels() const { return pixels_; }

 private:
  ImplantLayout layout_;
  AxonMapGrid map_;
  PhospheneModel<double> model_;
  std::vector<int> pixels_;
};

FeatureExtractor make_feature_extractor(const RunConfig& cfg);

struct DigitSplits {
  TargetSet train, val, test;
};
// Digits from cfg.data resized to the percept shape and split three ways.
DigitSplits load_digit_splits(const RunConfig& cfg);

// ---- commands -------------------------------------------------------------

struct SimulateResult {
  Percept percept;
  double max_brightness = 0.0;
};
// Writes percept.pgm and percept.f32.
SimulateResult cmd_simulate(const RunConfig& cfg, const std::filesystem::path& stimulus_csv);

enum class InvertMethod { kNaive, kDirect, kEncoder };
InvertMethod parse_invert_method(const std::string& name);

struct InvertRequest {
  InvertMethod method = InvertMethod::kNaive;
  std::filesystem::path checkpoint;  // encoder method only
  std::filesystem::path target;      // image (.pgm/.ppm) or .f32; empty: test digits
  int n_targets = 10;                // test digits when `target` is empty
};

struct InvertItem {
  std::string id;
  Stimulus stimulus;
  Percept percept;
  LossTerms terms;
  int steps = 0;
};

struct InvertReport {
  std::vector<InvertItem> items;
  LossTerms mean;
};

// Writes stimulus CSVs, percepts and loss.csv (`epoch,split,mae,smooth,
// feature,joint`: one row per target with split = target id and epoch = the
// optimisation steps taken, then a row with split = "mean").
InvertReport cmd_invert(const RunConfig& cfg, const InvertRequest& req);

struct TrainRequest {
  std::filesystem::path resume;     // start from this encoder checkpoint
  std::filesystem::path surrogate;  // train against this surrogate instead
};

struct TrainReport {
  TrainResult result;
  LossTerms naive_test, encoder_test;
};

// Writes encoder.bin, checkpoints/, training_log.csv and test_report.csv
// (`encoder,mae,smooth,feature,joint`).
TrainReport cmd_train(const RunConfig& cfg, const TrainRequest& req = {});

struct SurrogateRequest {
  std::filesystem::path dataset;  // load instead of generating
  bool save_dataset = false;
  std::filesystem::path resume;
};

// Writes surrogate.bin, surrogate_log.csv and, when asked, dataset/.
SurrogateTrainResult cmd_train_surrogate(const RunConfig& cfg, const SurrogateRequest& req = {});

struct SweepRow {
  int cell = 0;
  PatientParams phi;
  std::string encoder;
  LossTerms terms;  // mean over the test targets
  double log_joint = 0.0;
};

// One row per grid cell in sweep.csv (`cell,rho,lambda,a2,a3,a5,encoder,mae,
// smooth,feature,joint,log_joint`), and cells/cell_NNN.pgm showing the first
// target. An empty checkpoint sweeps the naive encoder.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::filesystem::path& checkpoint);
std::vector<PatientParams> sweep_grid(const RunConfig& cfg);

// Writes gap_report.csv and gap_summary.csv (`set,mean_gap`).
GapReport cmd_gap_report(const RunConfig& cfg, const std::filesystem::path& surrogate,
                         const std::filesystem::path& encoder);

// Writes filtered.jsonl, filter_report.csv (`criterion,removed`) and, when
// the masks are present, targets/<image_id>.pgm.
FilterReport cmd_filter_dataset(const RunConfig& cfg, const std::filesystem::path& manifest);

}  // namespace phosphene
