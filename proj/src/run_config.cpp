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

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "phosphene/cli.hpp"

#ifndef PHOSPHENE_DATA_DIR
#define PHOSPHENE_DATA_DIR "data"
#endif

namespace phosphene {

using json = nlohmann::ordered_json;

namespace {

// Reads the keys of one JSON object, remembering which were consumed so that
// typos surface as errors instead of silently falling back to defaults.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(&j), where_(std::move(where)) {
    if (!j.is_object()) throw ParseError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    used_.insert(key);
    try {
      out = j_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError(path(key) + ": " + e.what());
    }
  }

  void get(const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  void get(const std::string& key, RetinalPoint& out) {
    std::vector<double> v{out.x, out.y};
    get(key, v);
    if (v.size() != 2) throw ParseError(path(key) + ": expected [x, y]");
    out = {v[0], v[1]};
  }

  void get(const std::string& key, Range& out) {
    std::vector<double> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) throw ParseError(path(key) + ": expected [lo, hi]");
    out = {v[0], v[1]};
  }

  void get(const std::string& key, int& lo, int& hi) {
    std::vector<int> v{lo, hi};
    get(key, v);
    if (v.size() != 2) throw ParseError(path(key) + ": expected [min, max]");
    lo = v[0];
    hi = v[1];
  }

  Reader child(const std::string& key) {
    used_.insert(key);
    return Reader(j_->at(key), path(key));
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_->at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_->items()) {
      if (!used_.count(key)) throw ParseError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json* j_;
  std::string where_;
  std::set<std::string> used_;
};

json point(const RetinalPoint& p) { return json::array({p.x, p.y}); }
json range(const Range& r) { return json::array({r.lo, r.hi}); }

std::string smooth_name(SmoothMode m) { return m == SmoothMode::kAbsolute ? "absolute" : "signed"; }

SmoothMode parse_smooth(const std::string& s) {
  if (s == "absolute") return SmoothMode::kAbsolute;
  if (s == "signed") return SmoothMode::kSigned;
  throw ParseError("loss.smooth_mode: expected 'absolute' or 'signed', got '" + s + "'");
}

std::string coefficient_name(int i) { return "a" + std::to_string(i); }

Coefficient parse_coefficient(const std::string& s) {
  for (int i = 0; i < PatientParams::kCoefficientCount; ++i) {
    if (s == coefficient_name(i)) return static_cast<Coefficient>(i);
  }
  throw ParseError("sampler.coefficients: unknown coefficient '" + s + "'");
}

// ---- to JSON --------------------------------------------------------------

json phi_json(const PatientParams& p) {
  json a = json::array();
  for (int i = 0; i < PatientParams::kCoefficientCount; ++i) a.push_back(p.a(i));
  return {{"rho", p.rho}, {"lambda", p.lambda}, {"a", a}, {"eps_scale", p.eps_scale}};
}

json trajectory_json(const SpiralParams& s) {
  return {{"mode", s.mode == TrajectoryMode::kSpiral ? "spiral" : "straight"},
          {"optic_disc", point(s.optic_disc)},
          {"left_eye", s.left_eye},
          {"um_per_degree", s.um_per_degree},
          {"disc_radius_deg", s.disc_radius_deg},
          {"superior",
           {{"c0", s.sup_c0}, {"c1", s.sup_c1}, {"lnb0", s.sup_lnb0}, {"lnb1", s.sup_lnb1},
            {"center", s.sup_center}, {"width", s.sup_width}}},
          {"inferior",
           {{"c0", s.inf_c0}, {"c1", s.inf_c1}, {"lnb0", s.inf_lnb0}, {"lnb1", s.inf_lnb1},
            {"center", s.inf_center}, {"width", s.inf_width}}},
          {"straight_step", s.straight_step}};
}

// ---- from JSON ------------------------------------------------------------

void read_phi(Reader r, PatientParams& p) {
  r.get("rho", p.rho);
  r.get("lambda", p.lambda);
  std::vector<double> a(p.a.data(), p.a.data() + p.a.size());
  r.get("a", a);
  if (a.size() != PatientParams::kCoefficientCount) throw ParseError(r.path("a") + ": expected 10 values");
  for (int i = 0; i < PatientParams::kCoefficientCount; ++i) p.a(i) = a[i];
  r.get("eps_scale", p.eps_scale);
  r.finish();
}

void read_lobe(Reader r, double& c0, double& c1, double& lnb0, double& lnb1, double& center, double& width) {
  r.get("c0", c0);
  r.get("c1", c1);
  r.get("lnb0", lnb0);
  r.get("lnb1", lnb1);
  r.get("center", center);
  r.get("width", width);
  r.finish();
}

void read_trajectory(Reader r, SpiralParams& s) {
  std::string mode = s.mode == TrajectoryMode::kSpiral ? "spiral" : "straight";
  r.get("mode", mode);
  if (mode == "spiral") {
    s.mode = TrajectoryMode::kSpiral;
  } else if (mode == "straight") {
    s.mode = TrajectoryMode::kStraight;
  } else {
    throw ParseError(r.path("mode") + ": expected 'spiral' or 'straight'");
  }
  r.get("optic_disc", s.optic_disc);
  r.get("left_eye", s.left_eye);
  r.get("um_per_degree", s.um_per_degree);
  r.get("disc_radius_deg", s.disc_radius_deg);
  if (r.has("superior")) {
    read_lobe(r.child("superior"), s.sup_c0, s.sup_c1, s.sup_lnb0, s.sup_lnb1, s.sup_center, s.sup_width);
  }
  if (r.has("inferior")) {
    read_lobe(r.child("inferior"), s.inf_c0, s.inf_c1, s.inf_lnb0, s.inf_lnb1, s.inf_center, s.inf_width);
  }
  r.get("straight_step", s.straight_step);
  r.finish();
}

void read_sampler(Reader r, PatientRanges& s) {
  r.get("rho", s.rho);
  r.get("lambda", s.lambda);
  if (r.has("coefficients")) {
    Reader c = r.child("coefficients");
    s.coefficients.clear();
    for (int i = 0; i < PatientParams::kCoefficientCount; ++i) {
      const std::string name = coefficient_name(i);
      if (!c.has(name)) continue;
      Range range;
      c.get(name, range);
      s.coefficients.emplace_back(parse_coefficient(name), range);
    }
    c.finish();
  }
  r.finish();
}

void read_schedule(Reader r, LossSchedule& s) {
  // Shorthand for the default phase layout; excludes explicit phases.
  if (r.has("epochs_per_phase") || r.has("initial_alpha")) {
    int per_phase = 5;
    double alpha0 = 0.005;
    r.get("epochs_per_phase", per_phase);
    r.get("initial_alpha", alpha0);
    if (r.has("phases")) throw ParseError(r.path("phases") + ": conflicts with epochs_per_phase / initial_alpha");
    try {
      s = LossSchedule::default_schedule(per_phase, alpha0);
    } catch (const InvalidParameter& e) {
      throw ParseError(r.path("epochs_per_phase") + ": " + e.what());
    }
  }
  if (r.has("phases")) {
    const json& arr = r.raw("phases");
    if (!arr.is_array()) throw ParseError(r.path("phases") + ": expected an array");
    s.phases.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader p(arr[i], r.path("phases") + "[" + std::to_string(i) + "]");
      LossPhase ph;
      p.get("start_epoch", ph.start_epoch);
      p.get("alpha", ph.alpha);
      p.get("beta", ph.beta);
      p.finish();
      s.phases.push_back(ph);
    }
  }
  r.get("warmup_lr_divisor", s.warmup_lr_divisor);
  r.get("post_warmup_lr_factor", s.post_warmup_lr_factor);
  r.get("warmup_length", s.warmup_length);
  r.finish();
}

void read_encoder(Reader r, EncoderSpec& e) {
  r.get("target_width", e.target_width);
  r.get("phi_width", e.phi_width);
  r.get("trunk_width", e.trunk_width);
  r.get("x_width", e.x_width);
  r.get("amp_scale", e.amp_scale);
  r.get("freq_scale", e.freq_scale);
  r.get("pdur_shift", e.pdur_shift);
  r.get("head_init_scale", e.head_init_scale);
  r.get("amp_bias", e.amp_bias);
  r.get("freq_bias", e.freq_bias);
  r.get("pdur_bias", e.pdur_bias);
  r.finish();
}

void read_invert(Reader r, InvertConfig& c) {
  r.get("steps", c.steps);
  r.get("learning_rate", c.learning_rate);
  r.get("growth", c.growth);
  r.get("backoff", c.backoff);
  r.get("min_learning_rate", c.min_learning_rate);
  std::vector<double> scale{c.column_scale(0), c.column_scale(1), c.column_scale(2)};
  r.get("column_scale", scale);
  if (scale.size() != 3) throw ParseError(r.path("column_scale") + ": expected [freq, amp, pdur]");
  c.column_scale = Eigen::RowVector3d(scale[0], scale[1], scale[2]);
  r.get("fill_support", c.fill_support);
  r.finish();
}

void read_surrogate(Reader r, RunConfig::Surrogate& s) {
  if (r.has("dataset")) {
    Reader d = r.child("dataset");
    d.get("n_samples", s.dataset.n_samples);
    d.get("active", s.dataset.active_min, s.dataset.active_max);
    d.get("amp", s.dataset.amp);
    d.get("freq", s.dataset.freq);
    d.get("noise", s.dataset.noise_min, s.dataset.noise_max);
    d.get("pdur", s.dataset.pdur);
    d.get("train_fraction", s.dataset.train_fraction);
    d.finish();
  }
  if (r.has("net")) {
    Reader n = r.child("net");
    n.get("amp_width", s.net.amp_width);
    n.get("freq_width", s.net.freq_width);
    n.get("hidden_width", s.net.hidden_width);
    n.get("product_width", s.net.product_width);
    n.get("amp_norm", s.net.amp_norm);
    n.get("freq_norm", s.net.freq_norm);
    n.get("product_norm", s.net.product_norm);
    n.finish();
  }
  if (r.has("train")) {
    Reader t = r.child("train");
    t.get("epochs", s.train.epochs);
    t.get("batch_size", s.train.batch_size);
    t.get("learning_rate", s.train.learning_rate);
    t.get("weight_decay", s.train.weight_decay);
    t.finish();
  }
  r.finish();
}

}  // namespace

// ---- RunConfig ------------------------------------------------------------

double RunConfig::field_extent() const {
  if (axon_map.field_extent > 0.0) return axon_map.field_extent;
  const ImplantLayout layout =
      build_implant(implant.rows, implant.cols, implant.pitch, implant.electrode_radius, implant.center);
  double rho_max = phi.rho;
  if (sampler) rho_max = std::max(rho_max, sampler->rho.hi);
  return default_field_extent(layout, rho_max);
}

PatientRanges RunConfig::training_ranges() const {
  if (sampler) return *sampler;
  PatientRanges r = PatientRanges::fixed(phi.rho, phi.lambda);
  for (int i = 0; i < PatientParams::kCoefficientCount; ++i) {
    r.coefficients.emplace_back(static_cast<Coefficient>(i), Range{phi.a(i), phi.a(i)});
  }
  return r;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = train.batch_size;
  t.learning_rate = train.learning_rate;
  t.momentum = train.momentum;
  t.epochs = train.epochs;
  t.seed = seed;
  t.clip_norm = train.clip_norm;
  t.sampler = training_ranges();
  t.schedule = schedule;
  t.laplacian_k = loss.laplacian_k;
  t.smooth_mode = loss.smooth_mode;
  return t;
}

void RunConfig::resolve() {
  if (data.images.empty()) data.images = std::filesystem::path(PHOSPHENE_DATA_DIR) / "mnist5k-images-idx3-ubyte.gz";
  if (data.labels.empty()) data.labels = std::filesystem::path(PHOSPHENE_DATA_DIR) / "mnist5k-labels-idx1-ubyte.gz";
  const int ne = implant.rows * implant.cols;
  encoder.height = surrogate.net.height = axon_map.height;
  encoder.width = surrogate.net.width = axon_map.width;
  encoder.n_electrodes = surrogate.net.n_electrodes = ne;
  surrogate.train.seed = seed + 2;
  invert.loss = report_loss();

  if (display_ceiling <= 0.0) throw ParseError("display_ceiling must be > 0");
  if (train.checkpoint_every < 0) throw ParseError("train.checkpoint_every must be >= 0");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0) ||
      !(data.val_fraction > 0.0 && data.val_fraction < 1.0)) {
    throw ParseError("data.test_fraction and data.val_fraction must lie in (0, 1)");
  }
  if (sweep.axis != "rho_lambda" && sweep.axis != "coefficients") {
    throw ParseError("sweep.axis: expected 'rho_lambda' or 'coefficients'");
  }
  if (sweep.n_targets < 1 || gap.n_targets < 1 || gap.n_random < 1) {
    throw ParseError("sweep / gap target counts must be >= 1");
  }
  try {
    phi.validate();
    if (sampler) sampler->validate();
    schedule.validate();
    encoder.validate();
    train_config().validate();
    surrogate.dataset.validate();
    surrogate.net.validate();
    surrogate.train.validate();
    build_implant(implant.rows, implant.cols, implant.pitch, implant.electrode_radius, implant.center);
  } catch (const InvalidParameter& e) {
    throw ParseError(std::string("config: ") + e.what());
  } catch (const InvalidGeometry& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (axon_map.height < 1 || axon_map.width < 1 || axon_map.n_segments < 2) {
    throw ParseError("axon_map: height, width >= 1 and n_segments >= 2 required");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "config");
  std::uint64_t seed = c.seed;
  r.get("seed", seed);
  c.seed = seed;
  r.get("out", c.out);
  r.get("display_ceiling", c.display_ceiling);
  if (r.has("implant")) {
    Reader i = r.child("implant");
    i.get("rows", c.implant.rows);
    i.get("cols", c.implant.cols);
    i.get("pitch", c.implant.pitch);
    i.get("electrode_radius", c.implant.electrode_radius);
    i.get("center", c.implant.center);
    i.finish();
  }
  if (r.has("axon_map")) {
    Reader m = r.child("axon_map");
    m.get("height", c.axon_map.height);
    m.get("width", c.axon_map.width);
    m.get("n_segments", c.axon_map.n_segments);
    m.get("field_extent", c.axon_map.field_extent);
    m.get("field_center", c.axon_map.field_center);
    if (m.has("trajectory")) read_trajectory(m.child("trajectory"), c.axon_map.trajectory);
    m.get("cache", c.axon_map.cache);
    m.get("prune", c.axon_map.prune);
    m.finish();
  }
  if (r.has("phi")) read_phi(r.child("phi"), c.phi);
  if (r.has("sampler") && !r.raw("sampler").is_null()) {
    PatientRanges s;
    read_sampler(r.child("sampler"), s);
    c.sampler = s;
  }
  if (r.has("loss")) {
    Reader l = r.child("loss");
    l.get("alpha", c.loss.report.alpha);
    l.get("beta", c.loss.report.beta);
    l.get("laplacian_k", c.loss.laplacian_k);
    std::string mode = smooth_name(c.loss.smooth_mode);
    l.get("smooth_mode", mode);
    c.loss.smooth_mode = parse_smooth(mode);
    l.get("feature_weights", c.loss.feature_weights);
    l.get("feature_seed", c.loss.feature_seed);
    l.get("feature_tap", c.loss.feature_tap);
    l.finish();
  }
  if (r.has("schedule")) read_schedule(r.child("schedule"), c.schedule);
  if (r.has("encoder")) read_encoder(r.child("encoder"), c.encoder);
  if (r.has("train")) {
    Reader t = r.child("train");
    t.get("batch_size", c.train.batch_size);
    t.get("learning_rate", c.train.learning_rate);
    t.get("momentum", c.train.momentum);
    t.get("epochs", c.train.epochs);
    t.get("clip_norm", c.train.clip_norm);
    t.get("checkpoint_every", c.train.checkpoint_every);
    t.finish();
  }
  if (r.has("data")) {
    Reader d = r.child("data");
    d.get("images", c.data.images);
    d.get("labels", c.data.labels);
    d.get("limit", c.data.limit);
    d.get("test_fraction", c.data.test_fraction);
    d.get("val_fraction", c.data.val_fraction);
    d.get("split_seed", c.data.split_seed);
    d.get("manifest", c.data.manifest);
    d.get("categories", c.data.categories);
    if (d.has("thresholds")) {
      Reader f = d.child("thresholds");
      f.get("max_total_objects", c.data.thresholds.max_total_objects);
      f.get("min_area_fraction", c.data.thresholds.min_area_fraction);
      f.get("max_qualifying", c.data.thresholds.max_qualifying);
      f.get("min_brightness", c.data.thresholds.min_brightness);
      f.finish();
    }
    d.finish();
  }
  if (r.has("invert")) read_invert(r.child("invert"), c.invert);
  if (r.has("surrogate")) read_surrogate(r.child("surrogate"), c.surrogate);
  if (r.has("sweep")) {
    Reader s = r.child("sweep");
    s.get("axis", c.sweep.axis);
    s.get("rho", c.sweep.rho);
    s.get("lambda", c.sweep.lambda);
    s.get("a2", c.sweep.a2);
    s.get("a3", c.sweep.a3);
    s.get("a5", c.sweep.a5);
    s.get("n_targets", c.sweep.n_targets);
    s.finish();
  }
  if (r.has("gap")) {
    Reader g = r.child("gap");
    g.get("n_targets", c.gap.n_targets);
    g.get("n_random", c.gap.n_random);
    g.finish();
  }
  r.finish();
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["display_ceiling"] = c.display_ceiling;
  j["implant"] = {{"rows", c.implant.rows},
                  {"cols", c.implant.cols},
                  {"pitch", c.implant.pitch},
                  {"electrode_radius", c.implant.electrode_radius},
                  {"center", point(c.implant.center)}};
  j["axon_map"] = {{"height", c.axon_map.height},
                   {"width", c.axon_map.width},
                   {"n_segments", c.axon_map.n_segments},
                   {"field_extent", c.field_extent()},
                   {"field_center", point(c.axon_map.field_center)},
                   {"trajectory", trajectory_json(c.axon_map.trajectory)},
                   {"cache", c.axon_map.cache.string()},
                   {"prune", c.axon_map.prune}};
  j["phi"] = phi_json(c.phi);
  if (c.sampler) {
    json coeffs = json::object();
    for (const auto& [k, r] : c.sampler->coefficients) coeffs[coefficient_name(k)] = range(r);
    j["sampler"] = {{"rho", range(c.sampler->rho)}, {"lambda", range(c.sampler->lambda)}, {"coefficients", coeffs}};
  } else {
    j["sampler"] = nullptr;
  }
  j["loss"] = {{"alpha", c.loss.report.alpha},
               {"beta", c.loss.report.beta},
               {"laplacian_k", c.loss.laplacian_k},
               {"smooth_mode", smooth_name(c.loss.smooth_mode)},
               {"feature_weights", c.loss.feature_weights.string()},
               {"feature_seed", c.loss.feature_seed},
               {"feature_tap", c.loss.feature_tap}};
  json phases = json::array();
  for (const auto& p : c.schedule.phases) {
    phases.push_back({{"start_epoch", p.start_epoch}, {"alpha", p.alpha}, {"beta", p.beta}});
  }
  j["schedule"] = {{"phases", phases},
                   {"warmup_lr_divisor", c.schedule.warmup_lr_divisor},
                   {"post_warmup_lr_factor", c.schedule.post_warmup_lr_factor},
                   {"warmup_length", c.schedule.warmup_length}};
  const EncoderSpec& e = c.encoder;
  j["encoder"] = {{"target_width", e.target_width},   {"phi_width", e.phi_width},
                  {"trunk_width", e.trunk_width},     {"x_width", e.x_width},
                  {"amp_scale", e.amp_scale},         {"freq_scale", e.freq_scale},
                  {"pdur_shift", e.pdur_shift},       {"head_init_scale", e.head_init_scale},
                  {"amp_bias", e.amp_bias},           {"freq_bias", e.freq_bias},
                  {"pdur_bias", e.pdur_bias}};
  j["train"] = {{"batch_size", c.train.batch_size}, {"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},     {"epochs", c.train.epochs},
                {"clip_norm", c.train.clip_norm},   {"checkpoint_every", c.train.checkpoint_every}};
  j["data"] = {{"images", c.data.images.string()},
               {"labels", c.data.labels.string()},
               {"limit", c.data.limit},
               {"test_fraction", c.data.test_fraction},
               {"val_fraction", c.data.val_fraction},
               {"split_seed", c.data.split_seed},
               {"manifest", c.data.manifest.string()},
               {"categories", c.data.categories},
               {"thresholds",
                {{"max_total_objects", c.data.thresholds.max_total_objects},
                 {"min_area_fraction", c.data.thresholds.min_area_fraction},
                 {"max_qualifying", c.data.thresholds.max_qualifying},
                 {"min_brightness", c.data.thresholds.min_brightness}}}};
  const InvertConfig& iv = c.invert;
  j["invert"] = {{"steps", iv.steps},
                 {"learning_rate", iv.learning_rate},
                 {"growth", iv.growth},
                 {"backoff", iv.backoff},
                 {"min_learning_rate", iv.min_learning_rate},
                 {"column_scale", {iv.column_scale(0), iv.column_scale(1), iv.column_scale(2)}},
                 {"fill_support", iv.fill_support}};
  const auto& sd = c.surrogate.dataset;
  const auto& sn = c.surrogate.net;
  const auto& st = c.surrogate.train;
  j["surrogate"] = {
      {"dataset",
       {{"n_samples", sd.n_samples},
        {"active", {sd.active_min, sd.active_max}},
        {"amp", range(sd.amp)},
        {"freq", range(sd.freq)},
        {"noise", {sd.noise_min, sd.noise_max}},
        {"pdur", sd.pdur},
        {"train_fraction", sd.train_fraction}}},
      {"net",
       {{"amp_width", sn.amp_width},
        {"freq_width", sn.freq_width},
        {"hidden_width", sn.hidden_width},
        {"product_width", sn.product_width},
        {"amp_norm", sn.amp_norm},
        {"freq_norm", sn.freq_norm},
        {"product_norm", sn.product_norm}}},
      {"train",
       {{"epochs", st.epochs},
        {"batch_size", st.batch_size},
        {"learning_rate", st.learning_rate},
        {"weight_decay", st.weight_decay}}}};
  j["sweep"] = {{"axis", c.sweep.axis}, {"rho", c.sweep.rho}, {"lambda", c.sweep.lambda}, {"a2", c.sweep.a2},
                {"a3", c.sweep.a3},     {"a5", c.sweep.a5},   {"n_targets", c.sweep.n_targets}};
  j["gap"] = {{"n_targets", c.gap.n_targets}, {"n_random", c.gap.n_random}};
  return j.dump(2) + "\n";
}

void write_run_config(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  const auto path = cfg.out / "config.json";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << dump_run_config(cfg);
}

}  // namespace phosphene
