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

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "phosphene/cli.hpp"
#include "phosphene/io.hpp"

namespace phosphene {
namespace {

namespace fs = std::filesystem;

const fs::path kData = PHOSPHENE_TEST_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("phosphene_cli_" + name);
  fs::remove_all(p);
  return p;
}

// 6x6 implant, 25x25 percepts, small networks and few digits.
RunConfig desk(const std::string& name) {
  RunConfig c;
  c.seed = 5;
  c.out = scratch(name);
  c.implant.rows = c.implant.cols = 6;
  c.implant.electrode_radius = 100;
  c.axon_map.height = c.axon_map.width = 25;
  c.axon_map.n_segments = 100;
  c.encoder.target_width = 32;
  c.encoder.phi_width = 8;
  c.encoder.trunk_width = 32;
  c.encoder.x_width = 16;
  c.surrogate.net.amp_width = c.surrogate.net.freq_width = 16;
  c.surrogate.net.hidden_width = c.surrogate.net.product_width = 16;
  c.surrogate.dataset.n_samples = 40;
  c.surrogate.train.epochs = 1;
  c.data.limit = 120;
  c.train.epochs = 2;
  c.invert.steps = 40;
  c.sweep.n_targets = 6;
  c.gap.n_targets = 4;
  c.gap.n_random = 4;
  c.resolve();
  return c;
}

fs::path write_stimulus(const Stimulus& s, const std::string& name) {
  const auto p = fs::temp_directory_path() / ("phosphene_cli_" + name + ".csv");
  write_stimulus_csv(s, p);
  return p;
}

// ---- config ---------------------------------------------------------------

TEST(RunConfig, DumpParseRoundTrip) {
  RunConfig c = desk("roundtrip");
  c.sampler = PatientRanges{{150, 800}, {100, 1500}, {{kAmpGain, {0.3, 0.7}}}};
  c.phi.a(kFreqGain) = 0.03;
  c.loss.smooth_mode = SmoothMode::kSigned;
  c.data.categories = {"person", "dog"};
  c.resolve();
  const std::string once = dump_run_config(c);
  const RunConfig back = parse_run_config(once);
  EXPECT_EQ(dump_run_config(back), once);
  EXPECT_EQ(back.phi, c.phi);
  EXPECT_EQ(back.encoder, c.encoder);
  ASSERT_TRUE(back.sampler.has_value());
  ASSERT_EQ(back.sampler->coefficients.size(), 1u);
  EXPECT_EQ(back.sampler->coefficients[0].first, kAmpGain);
}

TEST(RunConfig, DefaultsResolveGeometry) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.encoder.n_electrodes, 225);
  EXPECT_EQ(c.encoder.height, 49);
  EXPECT_EQ(c.surrogate.net.n_electrodes, 225);
  EXPECT_EQ(c.axon_map.n_segments, 500);
  EXPECT_EQ(c.display_ceiling, 2.0);
  EXPECT_EQ(c.loss.laplacian_k, 5);
  // (15 - 1) / 2 * 400 + 2 * rho.
  EXPECT_DOUBLE_EQ(c.field_extent(), 2800.0 + 2.0 * 300.0);
}

TEST(RunConfig, FieldExtentCoversSampledRho) {
  const RunConfig c = parse_run_config(R"({"sampler": {"rho": [100, 800], "lambda": [100, 2000]}})");
  EXPECT_DOUBLE_EQ(c.field_extent(), 2800.0 + 2.0 * 800.0);
}

TEST(RunConfig, UnknownKeysAndBadValuesAreParseErrors) {
  EXPECT_THROW(parse_run_config(R"({"implant": {"rowz": 3}})"), ParseError);
  EXPECT_THROW(parse_run_config(R"({"colour": 1})"), ParseError);
  EXPECT_THROW(parse_run_config(R"({"loss": {"smooth_mode": "loud"}})"), ParseError);
  EXPECT_THROW(parse_run_config(R"({"implant": {"pitch": -1}})"), ParseError);
  EXPECT_THROW(parse_run_config(R"({"train": {"batch_size": "many"}})"), ParseError);
  EXPECT_THROW(parse_run_config("{not json"), ParseError);
  EXPECT_THROW(parse_run_config(R"({"schedule": {"epochs_per_phase": 3, "phases": []}})"), ParseError);
}

TEST(RunConfig, ScheduleShorthandMatchesDefaultSchedule) {
  const RunConfig c = parse_run_config(R"({"schedule": {"epochs_per_phase": 6, "initial_alpha": 0.01}})");
  const LossSchedule want = LossSchedule::default_schedule(6, 0.01);
  ASSERT_EQ(c.schedule.phases.size(), want.phases.size());
  for (std::size_t i = 0; i < want.phases.size(); ++i) {
    EXPECT_EQ(c.schedule.phases[i].start_epoch, want.phases[i].start_epoch);
    EXPECT_EQ(c.schedule.phases[i].alpha, want.phases[i].alpha);
    EXPECT_EQ(c.schedule.phases[i].beta, want.phases[i].beta);
  }
  EXPECT_EQ(c.schedule.warmup_length, want.warmup_length);
}

TEST(RunConfig, WrittenCopyParsesToTheSameConfig) {
  const RunConfig c = desk("written");
  write_run_config(c);
  EXPECT_EQ(dump_run_config(load_run_config(c.out / "config.json")), dump_run_config(c));
}

// ---- simulate -------------------------------------------------------------

TEST(Simulate, ZeroStimulusGivesBlackImage) {
  const RunConfig c = desk("sim_zero");
  const auto path = write_stimulus(Stimulus::Zero(36, 3), "zero");
  const auto r = cmd_simulate(c, path);
  EXPECT_EQ(r.max_brightness, 0.0);
  EXPECT_EQ(r.percept.cwiseAbs().maxCoeff(), 0.0);
  const RawImage img = read_netpbm(c.out / "percept.pgm");
  for (auto px : img.pixels) ASSERT_EQ(px, 0);
  EXPECT_TRUE(fs::exists(c.out / "config.json"));
  EXPECT_EQ(read_percept_raw(c.out / "percept.f32"), r.percept.cast<float>().cast<double>());
}

TEST(Simulate, RerunIsByteIdentical) {
  RunConfig c = desk("sim_a");
  Stimulus s = Stimulus::Zero(36, 3);
  s.row(14) << 20, 2, 0.45;
  s.row(21) << 60, 1.5, 0.2;
  const auto path = write_stimulus(s, "pair");
  cmd_simulate(c, path);
  const std::string first = slurp(c.out / "percept.f32");
  c.out = scratch("sim_b");
  cmd_simulate(c, path);
  EXPECT_EQ(slurp(c.out / "percept.f32"), first);
  EXPECT_FALSE(first.empty());
}

// Extent of the above-half-maximum region along its principal axes, in
// pixels, from the region's second moments.
std::pair<double, double> half_max_extents(const Percept& p) {
  const double half = 0.5 * p.maxCoeff();
  std::vector<Eigen::Vector2d> pts;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (p(r, c) >= half) pts.emplace_back(static_cast<double>(c), static_cast<double>(r));
    }
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& q : pts) mean += q;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& q : pts) cov += (q - mean) * (q - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d minor = es.eigenvectors().col(0), major = es.eigenvectors().col(1);
  double lo_maj = 1e9, hi_maj = -1e9, lo_min = 1e9, hi_min = -1e9;
  for (const auto& q : pts) {
    lo_maj = std::min(lo_maj, q.dot(major));
    hi_maj = std::max(hi_maj, q.dot(major));
    lo_min = std::min(lo_min, q.dot(minor));
    hi_min = std::max(hi_min, q.dot(minor));
  }
  return {hi_maj - lo_maj + 1.0, hi_min - lo_min + 1.0};
}

TEST(Simulate, SingleElectrodeAtLongLambdaIsElongated) {
  RunConfig c = desk("sim_streak");
  c.implant.rows = c.implant.cols = 1;
  c.implant.center = {1500.0, 1000.0};
  c.axon_map.field_center = c.implant.center;
  c.axon_map.height = c.axon_map.width = 61;
  c.axon_map.field_extent = 1500.0;
  c.axon_map.n_segments = 300;
  c.phi = PatientParams::with(150.0, 1500.0);
  c.resolve();
  Stimulus s(1, 3);
  s << 20, 2, 0.45;
  const auto r = cmd_simulate(c, write_stimulus(s, "single"));
  const auto [length, width] = half_max_extents(r.percept);
  EXPECT_GT(length, 2.0 * width) << "length " << length << " width " << width;
}

TEST(Simulate, MalformedCsvNamesTheLine) {
  const RunConfig c = desk("sim_bad");
  const auto path = fs::temp_directory_path() / "phosphene_cli_bad.csv";
  std::ofstream(path) << "electrode,freq_hz,amp_xth,pdur_ms\n0,20,1,0.45\n1,20,oops,0.45\n";
  try {
    cmd_simulate(c, path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Simulate, WrongElectrodeCountIsRejected) {
  const RunConfig c = desk("sim_count");
  EXPECT_THROW(cmd_simulate(c, write_stimulus(Stimulus::Zero(9, 3), "nine")), DimensionError);
}

// ---- invert ---------------------------------------------------------------

TEST(Invert, NaiveMatchesNaiveEncode) {
  const RunConfig c = desk("inv_naive");
  const auto rep = cmd_invert(c, {InvertMethod::kNaive, {}, {}, 4});
  const Scene scene(c);
  const auto test = load_digit_splits(c).test;
  ASSERT_EQ(rep.items.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const Stimulus want = naive_encode(test.images[i], scene.layout(), scene.map());
    EXPECT_EQ(rep.items[i].stimulus, want);
    EXPECT_EQ(read_stimulus_csv(c.out / "stimuli" / (rep.items[i].id + ".csv")), want);
  }
}

TEST(Invert, LossReportUsesTheLossSchema) {
  const RunConfig c = desk("inv_schema");
  const auto rep = cmd_invert(c, {InvertMethod::kNaive, {}, {}, 3});
  const auto rows = lines(c.out / "loss.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "epoch,split,mae,smooth,feature,joint");
  EXPECT_EQ(rows[4].rfind("0,mean,", 0), 0u);
  double mean_joint = 0.0;
  for (const auto& it : rep.items) mean_joint += it.terms.joint / 3.0;
  EXPECT_NEAR(rep.mean.joint, mean_joint, 1e-12);
}

TEST(Invert, DirectNeverLosesToNaive) {
  const RunConfig c = desk("inv_direct");
  const auto naive = cmd_invert(c, {InvertMethod::kNaive, {}, {}, 3});
  RunConfig d = c;
  d.out = scratch("inv_direct_b");
  const auto direct = cmd_invert(d, {InvertMethod::kDirect, {}, {}, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(direct.items[i].terms.joint, naive.items[i].terms.joint);
    EXPECT_EQ(direct.items[i].steps, c.invert.steps);
  }
}

TEST(Invert, EncoderWithoutCheckpointIsAUsageError) {
  const RunConfig c = desk("inv_enc");
  EXPECT_THROW(cmd_invert(c, {InvertMethod::kEncoder, {}, {}, 1}), UsageError);
  EXPECT_THROW(cmd_invert(c, {InvertMethod::kEncoder, "/nonexistent/encoder.bin", {}, 1}), UsageError);
  EXPECT_THROW(parse_invert_method("magic"), UsageError);
}

TEST(Invert, ImageTargetIsLeftUntouched) {
  const RunConfig c = desk("inv_image");
  const auto target = fs::temp_directory_path() / "phosphene_cli_target.pgm";
  Percept t = Percept::Zero(25, 25);
  t.block(8, 8, 9, 9).setConstant(1.0);
  write_percept_pgm(t, target, 1.0);
  const std::string before = slurp(target);
  const auto rep = cmd_invert(c, {InvertMethod::kNaive, {}, target, 1});
  EXPECT_EQ(slurp(target), before);
  ASSERT_EQ(rep.items.size(), 1u);
  EXPECT_EQ(rep.items[0].id, "phosphene_cli_target");
  EXPECT_GT(rep.items[0].stimulus.col(kAmp).sum(), 0.0);
}

// ---- train ----------------------------------------------------------------

TEST(Train, ZeroEpochsWritesTheInitialCheckpointOnly) {
  RunConfig c = desk("train0");
  c.train.epochs = 0;
  const auto rep = cmd_train(c);
  ASSERT_EQ(rep.result.log.size(), 1u);
  EXPECT_FALSE(fs::exists(c.out / "checkpoints"));
  const auto fresh = fs::temp_directory_path() / "phosphene_cli_fresh.bin";
  EncoderNet(c.encoder, c.seed).save(fresh);
  EXPECT_EQ(slurp(c.out / "encoder.bin"), slurp(fresh));
  EXPECT_EQ(lines(c.out / "training_log.csv").size(), 2u);
  EXPECT_EQ(lines(c.out / "test_report.csv")[0], "encoder,mae,smooth,feature,joint");
}

TEST(Train, SeededRerunGivesIdenticalLog) {
  RunConfig c = desk("train_a");
  cmd_train(c);
  const std::string first = slurp(c.out / "training_log.csv");
  c.out = scratch("train_b");
  cmd_train(c);
  EXPECT_EQ(slurp(c.out / "training_log.csv"), first);
  EXPECT_EQ(lines(c.out / "training_log.csv")[0], "epoch,split,mae,smooth,feature,joint");
}

TEST(Train, CheckpointsAndResume) {
  RunConfig c = desk("train_ckpt");
  c.train.checkpoint_every = 1;
  cmd_train(c);
  EXPECT_TRUE(fs::exists(c.out / "checkpoints" / "encoder_epoch_0001.bin"));
  EXPECT_TRUE(fs::exists(c.out / "checkpoints" / "encoder_epoch_0002.bin"));
  RunConfig r = desk("train_resume");
  r.train.epochs = 1;
  const auto rep = cmd_train(r, {c.out / "checkpoints" / "encoder_epoch_0002.bin", {}});
  // Epoch 0 evaluates the resumed weights, not a fresh network.
  const auto fresh = cmd_train([&] {
    RunConfig f = desk("train_fresh");
    f.train.epochs = 0;
    return f;
  }());
  EXPECT_NE(rep.result.log[0].terms.joint, fresh.result.log[0].terms.joint);
}

TEST(Train, ResumeFromForeignGeometryFails) {
  RunConfig big = desk("train_big");
  big.implant.rows = big.implant.cols = 4;
  big.resolve();
  const auto ckpt = fs::temp_directory_path() / "phosphene_cli_4x4.bin";
  EncoderNet(big.encoder, 1).save(ckpt);
  EXPECT_THROW(cmd_train(desk("train_foreign"), {ckpt, {}}), DimensionError);
}

// ---- sweep ----------------------------------------------------------------

TEST(Sweep, SingleCellEqualsInvertBatchMean) {
  RunConfig c = desk("sweep1");
  c.sweep.rho = {c.phi.rho};
  c.sweep.lambda = {c.phi.lambda};
  const auto rows = cmd_sweep(c, {});
  ASSERT_EQ(rows.size(), 1u);
  RunConfig d = c;
  d.out = scratch("sweep1_inv");
  const auto inv = cmd_invert(d, {InvertMethod::kNaive, {}, {}, c.sweep.n_targets});
  EXPECT_NEAR(rows[0].terms.joint, inv.mean.joint, 1e-12);
  EXPECT_NEAR(rows[0].terms.mae, inv.mean.mae, 1e-12);
  EXPECT_EQ(lines(c.out / "sweep.csv").size(), 2u);
  EXPECT_TRUE(fs::exists(c.out / "cells" / "cell_000.pgm"));
}

TEST(Sweep, NaiveLossGrowsWithRhoAndLambda) {
  RunConfig c = desk("sweep_corners");
  c.sweep.n_targets = 20;
  c.axon_map.field_extent = default_field_extent(build_implant(6, 6, 400, 100), 800.0);
  c.resolve();
  const auto rows = cmd_sweep(c, {});
  ASSERT_EQ(rows.size(), 4u);  // (150, 100), (150, 1500), (800, 100), (800, 1500)
  EXPECT_EQ(rows[0].phi.rho, 150.0);
  EXPECT_EQ(rows[0].phi.lambda, 100.0);
  EXPECT_EQ(rows[3].phi.rho, 800.0);
  EXPECT_EQ(rows[3].phi.lambda, 1500.0);
  EXPECT_GT(rows[3].terms.joint, rows[0].terms.joint);
  EXPECT_DOUBLE_EQ(rows[3].log_joint, std::log(rows[3].terms.joint));
}

TEST(Sweep, CoefficientGridIsACartesianProduct) {
  RunConfig c = desk("sweep_coef");
  c.sweep.axis = "coefficients";
  c.sweep.a2 = {0.3, 0.5, 0.7};
  c.sweep.a5 = {0.2, 0.8};
  const auto grid = sweep_grid(c);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid[5].a(kAmpGain), 0.7);
  EXPECT_EQ(grid[5].a(kSizeSlope), 0.8);
  EXPECT_EQ(grid[5].a(kFreqGain), c.phi.a(kFreqGain));
  c.sweep.rho.clear();
  c.sweep.axis = "rho_lambda";
  EXPECT_THROW(sweep_grid(c), UsageError);
}

// ---- surrogate and gap ----------------------------------------------------

TEST(TrainSurrogate, WritesCheckpointLogAndDataset) {
  const RunConfig c = desk("sur");
  const auto r = cmd_train_surrogate(c, {{}, true, {}});
  EXPECT_TRUE(fs::exists(c.out / "surrogate.bin"));
  EXPECT_EQ(lines(c.out / "surrogate_log.csv")[0], "epoch,train_mae,val_mae");
  const auto data = SurrogateDataset::load(c.out / "dataset");
  EXPECT_EQ(data.size(), 40u);
  RunConfig again = c;
  again.out = scratch("sur_again");
  const auto r2 = cmd_train_surrogate(again, {c.out / "dataset", false, {}});
  // Percepts are stored as float32.
  EXPECT_NEAR(r2.val_mae, r.val_mae, 1e-5 * r.val_mae);
}

TEST(GapReport, WritesOneRowPerTarget) {
  const RunConfig c = desk("gap_sur");
  cmd_train_surrogate(c);
  RunConfig e = desk("gap_enc");
  e.train.epochs = 0;
  cmd_train(e);
  const RunConfig g = desk("gap");
  const auto rep = cmd_gap_report(g, c.out / "surrogate.bin", e.out / "encoder.bin");
  EXPECT_EQ(rep.records.size(), 4u);
  const auto rows = lines(g.out / "gap_report.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "target_id,gap_mae,joint_true,joint_surrogate");
  EXPECT_EQ(lines(g.out / "gap_summary.csv")[0], "set,mean_gap");
  EXPECT_THROW(cmd_gap_report(g, "/nonexistent.bin", e.out / "encoder.bin"), UsageError);
}

// ---- filter ---------------------------------------------------------------

TEST(FilterDataset, ManifestCountsAndInputUntouched) {
  RunConfig c = desk("filter");
  c.data.categories = {"person", "dog", "car"};
  const auto manifest = kData / "manifest50.jsonl";
  const std::string before = slurp(manifest);
  const auto rep = cmd_filter_dataset(c, manifest);
  EXPECT_EQ(slurp(manifest), before);
  EXPECT_EQ(rep.removed[0], 7u);
  EXPECT_EQ(rep.removed[1], 11u);
  EXPECT_EQ(rep.removed[2], 5u);
  EXPECT_EQ(rep.removed[3], 6u);
  EXPECT_EQ(rep.kept.size(), 21u);
  EXPECT_EQ(read_manifest(c.out / "filtered.jsonl").size(), 21u);
  const auto report = lines(c.out / "filter_report.csv");
  ASSERT_EQ(report.size(), 6u);
  EXPECT_EQ(report[5], "kept,21");
}

TEST(FilterDataset, NeedsCategoriesAndAManifest) {
  RunConfig c = desk("filter_bad");
  EXPECT_THROW(cmd_filter_dataset(c, kData / "manifest50.jsonl"), UsageError);
  c.data.categories = {"dog"};
  EXPECT_THROW(cmd_filter_dataset(c, {}), UsageError);
}

// ---- the executable -------------------------------------------------------

int run_tool(const std::string& args) {
  const std::string cmd = std::string(PHOSPHENE_TOOL) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path desk_config_file(const std::string& name, const std::string& extra = "") {
  const auto p = fs::temp_directory_path() / ("phosphene_cli_" + name + ".json");
  std::ofstream(p) << R"({"implant": {"rows": 6, "cols": 6, "electrode_radius": 100},
 "axon_map": {"height": 25, "width": 25, "n_segments": 100},
 "encoder": {"target_width": 16, "phi_width": 4, "trunk_width": 16, "x_width": 8},
 "data": {"limit": 60})"
                   << extra << "}";
  return p;
}

TEST(Tool, ExitCodes) {
  const auto cfg = desk_config_file("tool");
  const auto out = scratch("tool");
  const std::string base = "--config " + cfg.string() + " --out " + out.string();
  EXPECT_EQ(run_tool(""), kExitUsage);
  EXPECT_EQ(run_tool("simulate"), kExitUsage);
  EXPECT_EQ(run_tool(base + " invert --method encoder"), kExitUsage);
  EXPECT_EQ(run_tool(base + " invert --method sideways"), kExitUsage);

  const auto typo = desk_config_file("tool_typo", R"(, "train": {"batch": 4})");
  EXPECT_EQ(run_tool("--config " + typo.string() + " --out " + out.string() + " train"), kExitUsage);

  const auto bad = fs::temp_directory_path() / "phosphene_cli_tool_bad.csv";
  std::ofstream(bad) << "electrode,freq_hz,amp_xth,pdur_ms\n0,x,1,1\n";
  EXPECT_EQ(run_tool(base + " simulate --stimulus " + bad.string()), kExitData);

  const auto zero = write_stimulus(Stimulus::Zero(36, 3), "tool_zero");
  EXPECT_EQ(run_tool(base + " --seed 9 simulate --stimulus " + zero.string()), kExitOk);
  EXPECT_EQ(load_run_config(out / "config.json").seed, 9u);

  const auto div = desk_config_file("tool_div", R"(, "train": {"epochs": 2, "learning_rate": 1e308, "clip_norm": 0})");
  EXPECT_EQ(run_tool("--config " + div.string() + " --out " + out.string() + " train"), kExitDivergence);
}

}  // namespace
}  // namespace phosphene
