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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "phosphene/cli.hpp"
#include "phosphene/io.hpp"

namespace phosphene {

namespace fs = std::filesystem;

namespace {

std::ofstream open_csv(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(17);
  return os;
}

void write_terms(std::ostream& os, const LossTerms& t) {
  os << t.mae << ',' << t.smooth << ',' << t.feature << ',' << t.joint;
}

void add_scaled(LossTerms& acc, const LossTerms& t, double w) {
  acc.mae += w * t.mae;
  acc.smooth += w * t.smooth;
  acc.feature += w * t.feature;
  acc.joint += w * t.joint;
}

LossTerms batch_loss(const std::vector<Percept>& targets, const std::vector<Percept>& percepts,
                     const LossConfig& loss, const FeatureExtractor& fx) {
  LossTerms acc;
  const double w = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) add_scaled(acc, evaluate_loss(targets[i], percepts[i], loss, &fx), w);
  return acc;
}

AxonMapGrid scene_map(const RunConfig& cfg) {
  const auto& m = cfg.axon_map;
  const std::array<int, 2> shape{m.height, m.width};
  const double extent = cfg.field_extent();
  if (!m.cache.empty() && fs::exists(m.cache)) {
    AxonMapGrid cached = load_axon_map(m.cache);
    // A two-segment build is cheap and fixes the pixel grid to compare against.
    const AxonMapGrid probe = build_axon_map(shape, extent, 2, m.trajectory, m.field_center);
    const bool same_grid = cached.height == m.height && cached.width == m.width &&
                           cached.n_segments == m.n_segments &&
                           (cached.pixel_positions - probe.pixel_positions).cwiseAbs().maxCoeff() < 0.5;
    if (same_grid) return cached;
    std::fprintf(stderr, "axon map cache %s does not match the config; rebuilding\n", m.cache.string().c_str());
  }
  AxonMapGrid map = build_axon_map(shape, extent, m.n_segments, m.trajectory, m.field_center);
  if (!m.cache.empty()) save_axon_map(map, m.cache);
  return map;
}

Percept load_target(const RunConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) throw IoError("target not found: " + path.string());
  if (path.extension() == ".f32") {
    Percept p = read_percept_raw(path);
    if (p.rows() != cfg.axon_map.height || p.cols() != cfg.axon_map.width) {
      throw DimensionError("target " + path.string() + " is " + std::to_string(p.rows()) + "x" +
                           std::to_string(p.cols()) + ", config expects " + std::to_string(cfg.axon_map.height) +
                           "x" + std::to_string(cfg.axon_map.width));
    }
    return p;
  }
  return preprocess_image(path, cfg.axon_map.height, cfg.axon_map.width);
}

TargetSet first_n(const TargetSet& set, int n) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < set.size() && static_cast<int>(i) < n; ++i) idx.push_back(i);
  return set.subset(idx, set.split);
}

EncoderNet load_encoder(const fs::path& path, const Scene& scene) {
  if (path.empty()) throw UsageError("an encoder checkpoint is required (--checkpoint)");
  if (!fs::exists(path)) throw UsageError("encoder checkpoint not found: " + path.string());
  EncoderNet net = EncoderNet::load(path);
  const auto& s = net.spec();
  if (s.height != scene.model().height() || s.width != scene.model().width() ||
      s.n_electrodes != scene.model().n_electrodes()) {
    throw DimensionError("encoder checkpoint " + path.string() + " was built for a different implant or grid");
  }
  return net;
}

SurrogateNet load_surrogate(const fs::path& path, const Scene& scene) {
  if (path.empty()) throw UsageError("a surrogate checkpoint is required (--surrogate)");
  if (!fs::exists(path)) throw UsageError("surrogate checkpoint not found: " + path.string());
  SurrogateNet net = SurrogateNet::load(path);
  const auto& s = net.spec();
  if (s.height != scene.model().height() || s.width != scene.model().width() ||
      s.n_electrodes != scene.model().n_electrodes()) {
    throw DimensionError("surrogate checkpoint " + path.string() + " was built for a different implant or grid");
  }
  return net;
}

std::string cell_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cell_%03d.pgm", i);
  return buf;
}

}  // namespace

// ---- shared setup ---------------------------------------------------------

Scene::Scene(const RunConfig& cfg)
    : layout_(build_implant(cfg.implant.rows, cfg.implant.cols, cfg.implant.pitch, cfg.implant.electrode_radius,
                            cfg.implant.center)),
      map_(scene_map(cfg)),
      model_(map_, layout_, cfg.axon_map.prune ? std::optional<PruneBounds>(PruneBounds{}) : std::nullopt),
      pixels_(electrode_pixels(layout_, map_)) {}

FeatureExtractor make_feature_extractor(const RunConfig& cfg) {
  if (cfg.loss.feature_weights.empty()) return FeatureExtractor::random_default(cfg.loss.feature_seed);
  return FeatureExtractor::load(cfg.loss.feature_weights, cfg.loss.feature_tap);
}

DigitSplits load_digit_splits(const RunConfig& cfg) {
  const TargetSet all = resize_targets(load_idx_digits(cfg.data.images, cfg.data.labels, cfg.data.limit),
                                       cfg.axon_map.height, cfg.axon_map.width);
  auto [rest, test] = split_targets(all, 1.0 - cfg.data.test_fraction, cfg.data.split_seed);
  auto [train, val] = split_targets(rest, 1.0 - cfg.data.val_fraction, cfg.data.split_seed + 1);
  train.split = "train";
  val.split = "val";
  test.split = "test";
  return {std::move(train), std::move(val), std::move(test)};
}

// ---- simulate -------------------------------------------------------------

SimulateResult cmd_simulate(const RunConfig& cfg, const fs::path& stimulus_csv) {
  const Stimulus s = read_stimulus_csv(stimulus_csv);
  const Scene scene(cfg);
  if (s.rows() != scene.model().n_electrodes()) {
    throw DimensionError("stimulus has " + std::to_string(s.rows()) + " electrodes, the implant has " +
                         std::to_string(scene.model().n_electrodes()));
  }
  write_run_config(cfg);
  SimulateResult r;
  r.percept = scene.model().render(s, cfg.phi);
  r.max_brightness = r.percept.size() ? r.percept.maxCoeff() : 0.0;
  write_percept_pgm(r.percept, cfg.out / "percept.pgm", cfg.display_ceiling);
  write_percept_raw(r.percept, cfg.out / "percept.f32");
  return r;
}

// ---- invert ---------------------------------------------------------------

InvertMethod parse_invert_method(const std::string& name) {
  if (name == "naive") return InvertMethod::kNaive;
  if (name == "direct") return InvertMethod::kDirect;
  if (name == "encoder") return InvertMethod::kEncoder;
  throw UsageError("unknown method '" + name + "' (naive, direct, encoder)");
}

InvertReport cmd_invert(const RunConfig& cfg, const InvertRequest& req) {
  const Scene scene(cfg);
  std::optional<EncoderNet> net;
  if (req.method == InvertMethod::kEncoder) net = load_encoder(req.checkpoint, scene);

  TargetSet targets;
  if (!req.target.empty()) {
    targets.images.push_back(load_target(cfg, req.target));
    targets.ids.push_back(req.target.stem().string());
  } else {
    if (req.n_targets < 1) throw UsageError("--n-targets must be >= 1");
    targets = first_n(load_digit_splits(cfg).test, req.n_targets);
  }

  write_run_config(cfg);
  fs::create_directories(cfg.out / "stimuli");
  fs::create_directories(cfg.out / "percepts");
  const FeatureExtractor fx = make_feature_extractor(cfg);
  const LossConfig loss = cfg.report_loss();
  const auto& model = scene.model();

  InvertReport rep;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Percept& t = targets.images[i];
    InvertItem item;
    item.id = targets.ids[i];
    switch (req.method) {
      case InvertMethod::kNaive:
        item.stimulus = naive_encode(t, scene.pixels());
        break;
      case InvertMethod::kEncoder:
        item.stimulus = encode(*net, t, cfg.phi);
        break;
      case InvertMethod::kDirect: {
        const InvertResult r = invert_direct(t, cfg.phi, naive_encode(t, scene.pixels()), model, &fx, cfg.invert);
        if (r.warning) std::fprintf(stderr, "%s: inversion stopped early\n", item.id.c_str());
        item.stimulus = r.stimulus;
        item.steps = static_cast<int>(r.history.size());
        break;
      }
    }
    item.percept = model.render(item.stimulus, cfg.phi);
    item.terms = evaluate_loss(t, item.percept, loss, &fx);
    add_scaled(rep.mean, item.terms, 1.0 / static_cast<double>(targets.size()));
    write_stimulus_csv(item.stimulus, cfg.out / "stimuli" / (item.id + ".csv"));
    write_percept_pgm(item.percept, cfg.out / "percepts" / (item.id + ".pgm"), cfg.display_ceiling);
    write_percept_raw(item.percept, cfg.out / "percepts" / (item.id + ".f32"));
    rep.items.push_back(std::move(item));
  }

  auto os = open_csv(cfg.out / "loss.csv");
  os << "epoch,split,mae,smooth,feature,joint\n";
  for (const auto& it : rep.items) {
    os << it.steps << ',' << it.id << ',';
    write_terms(os, it.terms);
    os << '\n';
  }
  os << 0 << ",mean,";
  write_terms(os, rep.mean);
  os << '\n';
  return rep;
}

// ---- train ----------------------------------------------------------------

TrainReport cmd_train(const RunConfig& cfg, const TrainRequest& req) {
  const Scene scene(cfg);
  EncoderNet net = req.resume.empty() ? EncoderNet(cfg.encoder, cfg.seed) : load_encoder(req.resume, scene);
  std::optional<SurrogateNet> surrogate;
  std::unique_ptr<SurrogateModel> surrogate_model;
  if (!req.surrogate.empty()) {
    surrogate = load_surrogate(req.surrogate, scene);
    if (cfg.sampler || !(surrogate->phi() == cfg.phi)) {
      throw UsageError("a surrogate is tied to one patient: train against it with that fixed phi and no sampler");
    }
    surrogate_model = std::make_unique<SurrogateModel>(*surrogate);
  }
  const ForwardModel& fwd = surrogate_model ? static_cast<const ForwardModel&>(*surrogate_model) : scene.model();

  const DigitSplits splits = load_digit_splits(cfg);
  const FeatureExtractor fx = make_feature_extractor(cfg);
  write_run_config(cfg);
  const fs::path ckpt_dir = cfg.out / "checkpoints";
  if (cfg.train.checkpoint_every > 0) fs::create_directories(ckpt_dir);

  const int every = cfg.train.checkpoint_every;
  const auto on_epoch = [&](int epoch, const EncoderNet& current) {
    if (every > 0 && epoch % every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "encoder_epoch_%04d.bin", epoch);
      current.save(ckpt_dir / name);
    }
    std::fprintf(stderr, "epoch %d done\n", epoch);
  };

  TrainReport rep;
  rep.result = train_encoder(std::move(net), splits.train, splits.val, fwd, &fx, cfg.train_config(), on_epoch);
  rep.result.net.save(cfg.out / "encoder.bin");
  write_training_log(rep.result.log, cfg.out / "training_log.csv");

  // Test losses are always measured against the true model.
  const auto& model = scene.model();
  const auto phis = validation_patients(cfg.training_ranges(), splits.test.size(), cfg.seed + 1);
  std::vector<Percept> naive, learned;
  const auto stimuli = encode(rep.result.net, splits.test.images, phis);
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    naive.push_back(model.render(naive_encode(splits.test.images[i], scene.pixels()), phis[i]));
    learned.push_back(model.render(stimuli[i], phis[i]));
  }
  const LossConfig loss = cfg.report_loss();
  rep.naive_test = batch_loss(splits.test.images, naive, loss, fx);
  rep.encoder_test = batch_loss(splits.test.images, learned, loss, fx);
  auto os = open_csv(cfg.out / "test_report.csv");
  os << "encoder,mae,smooth,feature,joint\n";
  os << "naive,";
  write_terms(os, rep.naive_test);
  os << "\nencoder,";
  write_terms(os, rep.encoder_test);
  os << '\n';
  return rep;
}

// ---- train-surrogate ------------------------------------------------------

SurrogateTrainResult cmd_train_surrogate(const RunConfig& cfg, const SurrogateRequest& req) {
  const Scene scene(cfg);
  SurrogateDataset data;
  if (!req.dataset.empty()) {
    data = SurrogateDataset::load(req.dataset);
  } else {
    data = gen_surrogate_dataset(cfg.surrogate.dataset, cfg.phi, scene.model(), cfg.seed);
  }
  SurrogateNet net =
      req.resume.empty() ? SurrogateNet(cfg.surrogate.net, cfg.phi, cfg.seed + 1) : load_surrogate(req.resume, scene);
  write_run_config(cfg);
  if (req.save_dataset) data.save(cfg.out / "dataset");
  SurrogateTrainResult r = train_surrogate(std::move(net), data, cfg.surrogate.train);
  r.net.save(cfg.out / "surrogate.bin");
  write_surrogate_log(r.log, cfg.out / "surrogate_log.csv");
  return r;
}

// ---- sweep ----------------------------------------------------------------

std::vector<PatientParams> sweep_grid(const RunConfig& cfg) {
  std::vector<PatientParams> grid;
  const auto& s = cfg.sweep;
  if (s.axis == "rho_lambda") {
    for (double rho : s.rho) {
      for (double lambda : s.lambda) {
        PatientParams p = cfg.phi;
        p.rho = rho;
        p.lambda = lambda;
        grid.push_back(p);
      }
    }
  } else {
    const auto values = [&](const std::vector<double>& v, int k) {
      return v.empty() ? std::vector<double>{cfg.phi.a(k)} : v;
    };
    for (double a2 : values(s.a2, kAmpGain)) {
      for (double a3 : values(s.a3, kFreqGain)) {
        for (double a5 : values(s.a5, kSizeSlope)) {
          PatientParams p = cfg.phi;
          p.a(kAmpGain) = a2;
          p.a(kFreqGain) = a3;
          p.a(kSizeSlope) = a5;
          grid.push_back(p);
        }
      }
    }
  }
  if (grid.empty()) throw UsageError("sweep grid is empty");
  for (const auto& p : grid) {
    try {
      p.validate();
    } catch (const InvalidParameter& e) {
      throw UsageError(std::string("sweep grid: ") + e.what());
    }
  }
  return grid;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const fs::path& checkpoint) {
  const std::vector<PatientParams> grid = sweep_grid(cfg);
  const Scene scene(cfg);
  std::optional<EncoderNet> net;
  if (!checkpoint.empty()) net = load_encoder(checkpoint, scene);
  const TargetSet targets = first_n(load_digit_splits(cfg).test, cfg.sweep.n_targets);
  const FeatureExtractor fx = make_feature_extractor(cfg);
  const LossConfig loss = cfg.report_loss();
  write_run_config(cfg);
  fs::create_directories(cfg.out / "cells");

  std::vector<SweepRow> rows;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const PatientParams& phi = grid[c];
    std::vector<Stimulus> stimuli;
    if (net) {
      stimuli = encode(*net, targets.images, std::vector<PatientParams>(targets.size(), phi));
    } else {
      for (const auto& t : targets.images) stimuli.push_back(naive_encode(t, scene.pixels()));
    }
    std::vector<Percept> percepts;
    for (const auto& s : stimuli) percepts.push_back(scene.model().render(s, phi));
    SweepRow row;
    row.cell = static_cast<int>(c);
    row.phi = phi;
    row.encoder = net ? "encoder" : "naive";
    row.terms = batch_loss(targets.images, percepts, loss, fx);
    row.log_joint = std::log(row.terms.joint);
    write_percept_pgm(percepts.front(), cfg.out / "cells" / cell_name(row.cell), cfg.display_ceiling);
    rows.push_back(row);
    std::fprintf(stderr, "cell %zu/%zu joint %.6g\n", c + 1, grid.size(), row.terms.joint);
  }

  auto os = open_csv(cfg.out / "sweep.csv");
  os << "cell,rho,lambda,a2,a3,a5,encoder,mae,smooth,feature,joint,log_joint\n";
  for (const auto& r : rows) {
    os << r.cell << ',' << r.phi.rho << ',' << r.phi.lambda << ',' << r.phi.a(kAmpGain) << ','
       << r.phi.a(kFreqGain) << ',' << r.phi.a(kSizeSlope) << ',' << r.encoder << ',';
    write_terms(os, r.terms);
    os << ',' << r.log_joint << '\n';
  }
  return rows;
}

// ---- gap-report -----------------------------------------------------------

GapReport cmd_gap_report(const RunConfig& cfg, const fs::path& surrogate, const fs::path& encoder) {
  const Scene scene(cfg);
  const SurrogateNet net = load_surrogate(surrogate, scene);
  const EncoderNet enc = load_encoder(encoder, scene);
  const TargetSet targets = first_n(load_digit_splits(cfg).test, cfg.gap.n_targets);
  const FeatureExtractor fx = make_feature_extractor(cfg);
  write_run_config(cfg);
  GapReport rep = exploit_gap(enc, net, scene.model(), targets, &fx, cfg.surrogate.dataset,
                              static_cast<std::size_t>(cfg.gap.n_random), cfg.seed + 3);
  write_gap_report(rep, cfg.out / "gap_report.csv");
  auto os = open_csv(cfg.out / "gap_summary.csv");
  os << "set,mean_gap\nproposed," << rep.mean_gap_proposed << "\nrandom," << rep.mean_gap_random << '\n';
  return rep;
}

// ---- filter-dataset -------------------------------------------------------

FilterReport cmd_filter_dataset(const RunConfig& cfg, const fs::path& manifest) {
  const fs::path path = manifest.empty() ? cfg.data.manifest : manifest;
  if (path.empty()) throw UsageError("a manifest is required (--manifest or data.manifest)");
  if (cfg.data.categories.empty()) throw UsageError("data.categories is empty");
  const std::vector<AnnotationRecord> records = read_manifest(path);
  const std::set<std::string> categories(cfg.data.categories.begin(), cfg.data.categories.end());
  write_run_config(cfg);
  FilterReport rep = filter_annotations(records, categories, cfg.data.thresholds);
  write_manifest(rep.kept, cfg.out / "filtered.jsonl");
  auto os = open_csv(cfg.out / "filter_report.csv");
  os << "criterion,removed\n";
  const char* names[4] = {"total_objects", "no_large_object", "too_many_objects", "too_dim"};
  for (int i = 0; i < 4; ++i) os << names[i] << ',' << rep.removed[i] << '\n';
  os << "kept," << rep.kept.size() << '\n';

  const SegmentResult seg = segment_targets(rep.kept, path.parent_path(), categories, cfg.axon_map.height,
                                            cfg.axon_map.width, cfg.data.thresholds);
  if (seg.missing_masks > 0) {
    std::fprintf(stderr, "%zu records have missing image or mask files; not segmented\n", seg.missing_masks);
  }
  if (seg.targets.size() > 0) {
    fs::create_directories(cfg.out / "targets");
    for (std::size_t i = 0; i < seg.targets.size(); ++i) {
      write_percept_pgm(seg.targets.images[i], cfg.out / "targets" / (seg.targets.ids[i] + ".pgm"), 1.0);
    }
  }
  return rep;
}

}  // namespace phosphene
