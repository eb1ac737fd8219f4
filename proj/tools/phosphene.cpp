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

// phosphene: simulate, invert, train, sweep and report.
//
// Exit codes: 0 ok, 2 usage or config, 3 data error, 4 numeric divergence.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "phosphene/cli.hpp"

using namespace phosphene;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> ceiling;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  if (g.ceiling) cfg.display_ceiling = *g.ceiling;
  cfg.resolve();
  return cfg;
}

void print_terms(const char* label, const LossTerms& t) {
  std::printf("%s mae %.6g smooth %.6g feature %.6g joint %.6g\n", label, t.mae, t.smooth, t.feature, t.joint);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phosphene simulation and stimulus encoding"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides the config seed");
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--ceiling", g.ceiling, "Brightness mapped to white in PGM output")->check(CLI::PositiveNumber);

  std::string stimulus;
  auto* simulate = app.add_subcommand("simulate", "Render a stimulus CSV");
  simulate->add_option("--stimulus", stimulus, "Stimulus CSV")->required();

  std::string method = "naive", checkpoint, target;
  int n_targets = 10;
  auto* invert = app.add_subcommand("invert", "Find a stimulus for a target image");
  invert->add_option("--method", method, "naive, direct or encoder")
      ->check(CLI::IsMember({"naive", "direct", "encoder"}));
  invert->add_option("--checkpoint", checkpoint, "Encoder checkpoint (method encoder)");
  invert->add_option("--target", target, "Target image (.pgm, .ppm or .f32); default: test digits");
  invert->add_option("--n-targets", n_targets, "Test digits to invert when no --target is given");

  std::optional<int> epochs, checkpoint_every;
  std::string resume, surrogate;
  auto* train = app.add_subcommand("train", "Train the encoder");
  train->add_option("--epochs", epochs);
  train->add_option("--checkpoint-every", checkpoint_every, "Save a checkpoint every N epochs");
  train->add_option("--resume", resume, "Start from this encoder checkpoint");
  train->add_option("--surrogate", surrogate, "Train against this surrogate instead of the model");

  std::optional<int> sur_epochs, samples;
  std::string dataset, sur_resume;
  bool save_dataset = false;
  auto* train_sur = app.add_subcommand("train-surrogate", "Fit a surrogate forward model");
  train_sur->add_option("--epochs", sur_epochs);
  train_sur->add_option("--samples", samples, "Dataset size");
  train_sur->add_option("--dataset", dataset, "Load this dataset instead of generating one");
  train_sur->add_flag("--save-dataset", save_dataset, "Write the generated dataset to OUT/dataset");
  train_sur->add_option("--resume", sur_resume, "Start from this surrogate checkpoint");

  std::string sweep_ckpt;
  auto* sweep = app.add_subcommand("sweep", "Mean test loss over a patient grid");
  sweep->add_option("--checkpoint", sweep_ckpt, "Encoder checkpoint; default: naive encoder");

  std::string gap_surrogate, gap_encoder;
  auto* gap = app.add_subcommand("gap-report", "Surrogate vs model gap on encoder proposals");
  gap->add_option("--surrogate", gap_surrogate)->required();
  gap->add_option("--encoder", gap_encoder)->required();

  std::string manifest;
  auto* filter = app.add_subcommand("filter-dataset", "Filter an annotation manifest");
  filter->add_option("--manifest", manifest, "JSONL manifest; default: data.manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = resolve(g);
  } catch (const Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  }

  try {
    if (*simulate) {
      const auto r = cmd_simulate(cfg, stimulus);
      std::printf("max brightness %.9g\n", r.max_brightness);
    } else if (*invert) {
      InvertRequest req;
      req.method = parse_invert_method(method);
      req.checkpoint = checkpoint;
      req.target = target;
      req.n_targets = n_targets;
      const auto r = cmd_invert(cfg, req);
      print_terms(method.c_str(), r.mean);
    } else if (*train) {
      if (epochs) cfg.train.epochs = *epochs;
      if (checkpoint_every) cfg.train.checkpoint_every = *checkpoint_every;
      cfg.resolve();
      const auto r = cmd_train(cfg, {resume, surrogate});
      std::printf("best epoch %d, val joint %.6g\n", r.result.best_epoch, r.result.best_val_joint);
      print_terms("naive test", r.naive_test);
      print_terms("encoder test", r.encoder_test);
    } else if (*train_sur) {
      if (sur_epochs) cfg.surrogate.train.epochs = *sur_epochs;
      if (samples) cfg.surrogate.dataset.n_samples = *samples;
      cfg.resolve();
      const auto r = cmd_train_surrogate(cfg, {dataset, save_dataset, sur_resume});
      std::printf("validation mae %.6g\n", r.val_mae);
    } else if (*sweep) {
      for (const auto& row : cmd_sweep(cfg, sweep_ckpt)) {
        std::printf("cell %d rho %g lambda %g a2 %g a3 %g a5 %g joint %.6g\n", row.cell, row.phi.rho,
                    row.phi.lambda, row.phi.a(kAmpGain), row.phi.a(kFreqGain), row.phi.a(kSizeSlope),
                    row.terms.joint);
      }
    } else if (*gap) {
      const auto r = cmd_gap_report(cfg, gap_surrogate, gap_encoder);
      std::printf("mean gap proposed %.6g random %.6g\n", r.mean_gap_proposed, r.mean_gap_random);
    } else if (*filter) {
      const auto r = cmd_filter_dataset(cfg, manifest);
      std::printf("input %zu kept %zu removed %zu %zu %zu %zu\n", r.input, r.kept.size(), r.removed[0],
                  r.removed[1], r.removed[2], r.removed[3]);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
