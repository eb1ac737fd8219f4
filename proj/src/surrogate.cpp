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

#include "phosphene/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace phosphene {

using nn::Matrix;

// ---- dataset --------------------------------------------------------------

void SurrogateDatasetSpec::validate() const {
  if (n_samples < 1) throw InvalidParameter("surrogate dataset: n_samples must be >= 1");
  if (active_min < 1 || active_max < active_min) throw InvalidParameter("surrogate dataset: bad active range");
  if (noise_min < 0 || noise_max < noise_min) throw InvalidParameter("surrogate dataset: bad noise range");
  if (!(amp.lo > 0 && amp.hi >= amp.lo) || !(freq.lo > 0 && freq.hi >= freq.lo)) {
    throw InvalidParameter("surrogate dataset: amp and freq ranges must be positive");
  }
  if (!(pdur > 0)) throw InvalidParameter("surrogate dataset: pdur must be positive");
  if (!(train_fraction > 0 && train_fraction <= 1)) throw InvalidParameter("surrogate dataset: bad train fraction");
}

Stimulus random_surrogate_stimulus(const SurrogateDatasetSpec& spec, int n_electrodes, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n_electrodes));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  const int active = uniform_int(rng, std::min(spec.active_min, n_electrodes), std::min(spec.active_max, n_electrodes));
  const int room = n_electrodes - active;
  const int noise = uniform_int(rng, std::min(spec.noise_min, room), std::min(spec.noise_max, room));

  Stimulus s = Stimulus::Zero(n_electrodes, 3);
  for (int i = 0; i < active; ++i) {
    const int e = order[static_cast<std::size_t>(i)];
    s(e, kAmp) = uniform(rng, spec.amp.lo, spec.amp.hi);
    s(e, kFreq) = uniform(rng, spec.freq.lo, spec.freq.hi);
    s(e, kPdur) = spec.pdur;
  }
  for (int i = active; i < active + noise; ++i) {
    const int e = order[static_cast<std::size_t>(i)];
    if (uniform01(rng) < 0.5) {
      s(e, kAmp) = uniform(rng, spec.amp.lo, spec.amp.hi);
    } else {
      s(e, kFreq) = uniform(rng, spec.freq.lo, spec.freq.hi);
    }
    s(e, kPdur) = spec.pdur;
  }
  return s;
}

SurrogateDataset gen_surrogate_dataset(const SurrogateDatasetSpec& spec, const PatientParams& phi,
                                       const ForwardModel& fwd, std::uint64_t seed) {
  spec.validate();
  phi.validate();
  Rng rng(seed);
  SurrogateDataset d;
  d.phi = phi;
  d.stimuli.reserve(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) d.stimuli.push_back(random_surrogate_stimulus(spec, fwd.n_electrodes(), rng));
  d.percepts.reserve(d.stimuli.size());
  for (const auto& s : d.stimuli) d.percepts.push_back(fwd.render(s, phi));
  d.n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * spec.n_samples));
  return d;
}

void SurrogateDataset::save(const std::filesystem::path& dir) const {
  if (stimuli.empty() || stimuli.size() != percepts.size()) throw InvalidParameter("surrogate dataset: nothing to save");
  std::filesystem::create_directories(dir);
  const auto h = percepts.front().rows(), w = percepts.front().cols();
  const auto ne = stimuli.front().rows();
  const auto v = phi.as_vector();
  nlohmann::json m = {{"n_samples", size()},
                      {"n_train", n_train},
                      {"height", h},
                      {"width", w},
                      {"n_electrodes", ne},
                      {"phi", std::vector<double>(v.data(), v.data() + v.size())},
                      {"stimuli", "stimuli.csv"},
                      {"percepts", "percepts.f32"}};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';

  std::ofstream csv(dir / "stimuli.csv");
  if (!csv) throw IoError("cannot write " + (dir / "stimuli.csv").string());
  csv << "sample,electrode,freq_hz,amp_xth,pdur_ms\n";
  csv.precision(17);
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    for (Eigen::Index e = 0; e < ne; ++e) {
      const auto& s = stimuli[i];
      csv << i << ',' << e << ',' << s(e, kFreq) << ',' << s(e, kAmp) << ',' << s(e, kPdur) << '\n';
    }
  }

  std::ofstream bin(dir / "percepts.f32", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "percepts.f32").string());
  bin.write("PFST", 4);
  detail::write_u32(bin, 1);
  detail::write_u32(bin, static_cast<std::uint32_t>(size()));
  detail::write_u32(bin, static_cast<std::uint32_t>(h));
  detail::write_u32(bin, static_cast<std::uint32_t>(w));
  for (const auto& p : percepts) {
    for (Eigen::Index i = 0; i < p.size(); ++i) detail::write_f32(bin, static_cast<float>(p.data()[i]));
  }
  if (!bin) throw IoError("failed writing " + (dir / "percepts.f32").string());
}

SurrogateDataset SurrogateDataset::load(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw LoadError("cannot open " + (dir / "manifest.json").string());
  SurrogateDataset d;
  std::size_t n = 0;
  Eigen::Index h = 0, w = 0, ne = 0;
  std::string stim_name, perc_name;
  try {
    const auto m = nlohmann::json::parse(mf);
    n = m.at("n_samples");
    d.n_train = m.at("n_train");
    h = m.at("height");
    w = m.at("width");
    ne = m.at("n_electrodes");
    const auto v = m.at("phi").get<std::vector<double>>();
    if (v.size() != PatientParams::kParamCount) throw LoadError("manifest phi must have 12 entries");
    d.phi = PatientParams::from_vector(Eigen::Map<const PatientParams::Vector>(v.data()));
    stim_name = m.at("stimuli");
    perc_name = m.at("percepts");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (d.n_train > n) throw LoadError("manifest: n_train exceeds n_samples");

  std::ifstream csv(dir / stim_name);
  if (!csv) throw LoadError("cannot open " + (dir / stim_name).string());
  d.stimuli.assign(n, Stimulus::Zero(ne, 3));
  std::string line;
  std::getline(csv, line);
  if (line != "sample,electrode,freq_hz,amp_xth,pdur_ms") throw ParseError(stim_name + " line 1: bad header");
  std::size_t line_no = 1, rows = 0;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t i = 0;
    Eigen::Index e = 0;
    double f = 0, a = 0, p = 0;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(ss >> i >> c1 >> e >> c2 >> f >> c3 >> a >> c4 >> p) || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' ||
        i >= n || e < 0 || e >= ne) {
      throw ParseError(stim_name + " line " + std::to_string(line_no) + ": malformed row");
    }
    d.stimuli[i].row(e) << f, a, p;
    ++rows;
  }
  if (rows != n * static_cast<std::size_t>(ne)) throw ParseError(stim_name + ": row count does not match manifest");

  std::ifstream bin(dir / perc_name, std::ios::binary);
  if (!bin) throw LoadError("cannot open " + (dir / perc_name).string());
  detail::expect_magic(bin, "PFST", "percept stack");
  if (detail::read_u32(bin, "percept stack header") != 1) throw LoadError("unsupported percept stack version");
  if (detail::read_u32(bin, "percept stack header") != n || detail::read_u32(bin, "percept stack header") != h ||
      detail::read_u32(bin, "percept stack header") != w) {
    throw LoadError("percept stack shape does not match manifest");
  }
  d.percepts.assign(n, Percept(h, w));
  for (auto& p : d.percepts) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = detail::read_f32(bin, "percept stack");
  }
  return d;
}

// ---- network --------------------------------------------------------------

void SurrogateSpec::validate() const {
  if (height < 1 || width < 1 || n_electrodes < 1) throw InvalidParameter("surrogate: empty grid or implant");
  if (amp_width < 1 || freq_width < 1 || hidden_width < 1 || product_width < 1) {
    throw InvalidParameter("surrogate: layer widths must be positive");
  }
  if (!(amp_norm > 0 && freq_norm > 0 && product_norm > 0)) throw InvalidParameter("surrogate: bad input scaling");
}

long SurrogateSpec::parameter_count() const {
  const long ne = n_electrodes, hw = static_cast<long>(height) * width;
  auto fc = [](long in, long out) { return in * out + out; };
  return fc(ne, amp_width) + fc(ne, freq_width) + fc(amp_width + freq_width, hidden_width) + fc(ne, product_width) +
         fc(hidden_width + product_width, hw);
}

SurrogateSpec SurrogateSpec::desk(int height, int width, int n_electrodes) {
  SurrogateSpec s;
  s.height = height;
  s.width = width;
  s.n_electrodes = n_electrodes;
  s.amp_width = 128;
  s.freq_width = 128;
  s.hidden_width = 256;
  s.product_width = 128;
  return s;
}

namespace {

Matrix vcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

nlohmann::json spec_json(const SurrogateSpec& s) {
  return {{"height", s.height},         {"width", s.width},           {"n_electrodes", s.n_electrodes},
          {"amp_width", s.amp_width},   {"freq_width", s.freq_width}, {"hidden_width", s.hidden_width},
          {"product_width", s.product_width}, {"amp_norm", s.amp_norm}, {"freq_norm", s.freq_norm},
          {"product_norm", s.product_norm}};
}

SurrogateSpec spec_from_json(const nlohmann::json& j) {
  SurrogateSpec s;
  s.height = j.at("height");
  s.width = j.at("width");
  s.n_electrodes = j.at("n_electrodes");
  s.amp_width = j.at("amp_width");
  s.freq_width = j.at("freq_width");
  s.hidden_width = j.at("hidden_width");
  s.product_width = j.at("product_width");
  s.amp_norm = j.at("amp_norm");
  s.freq_norm = j.at("freq_norm");
  s.product_norm = j.at("product_norm");
  return s;
}

}  // namespace

SurrogateNet::SurrogateNet(const SurrogateSpec& spec, const PatientParams& phi, std::uint64_t seed)
    : spec_(spec), phi_(phi) {
  spec.validate();
  phi.validate();
  Rng rng(seed);
  const int ne = spec.n_electrodes;
  fc_amp_ = nn::Dense("surrogate.amp", ne, spec.amp_width, rng);
  fc_freq_ = nn::Dense("surrogate.freq", ne, spec.freq_width, rng);
  fc_hidden_ = nn::Dense("surrogate.hidden", spec.amp_width + spec.freq_width, spec.hidden_width, rng);
  fc_prod_ = nn::Dense("surrogate.product", ne, spec.product_width, rng);
  fc_out_ = nn::Dense("surrogate.out", spec.hidden_width + spec.product_width, spec.height * spec.width, rng);
}

std::vector<nn::Dense*> SurrogateNet::layers() { return {&fc_amp_, &fc_freq_, &fc_hidden_, &fc_prod_, &fc_out_}; }

nn::ParamList SurrogateNet::params() {
  nn::ParamList out;
  for (nn::Dense* d : layers()) {
    out.push_back(&d->weight);
    out.push_back(&d->bias);
  }
  return out;
}

void SurrogateNet::zero_weights() {
  for (auto* p : params()) p->value.setZero();
}

SurrogateNet::Inputs SurrogateNet::split(const std::vector<Stimulus>& stimuli) const {
  const int ne = spec_.n_electrodes;
  const auto b = static_cast<Eigen::Index>(stimuli.size());
  Inputs in{Matrix(ne, b), Matrix(ne, b), Matrix(ne, b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& s = stimuli[static_cast<std::size_t>(i)];
    if (s.rows() != ne) {
      throw DimensionError("surrogate: stimulus has " + std::to_string(s.rows()) + " electrodes, expected " +
                           std::to_string(ne));
    }
    in.amp.col(i) = s.col(kAmp) / spec_.amp_norm;
    in.freq.col(i) = s.col(kFreq) / spec_.freq_norm;
    in.prod.col(i) = s.col(kAmp).cwiseProduct(s.col(kFreq)) / spec_.product_norm;
  }
  return in;
}

Matrix SurrogateNet::forward(const std::vector<Stimulus>& stimuli) {
  const Inputs in = split(stimuli);
  Cache& c = cache_;
  c.a_pre = fc_amp_.forward(in.amp);
  c.f_pre = fc_freq_.forward(in.freq);
  c.h_pre = fc_hidden_.forward(vcat(nn::leaky_relu(c.a_pre), nn::leaky_relu(c.f_pre)));
  c.p_pre = fc_prod_.forward(in.prod);
  return fc_out_.forward(vcat(nn::leaky_relu(c.h_pre), nn::leaky_relu(c.p_pre)));
}

Matrix SurrogateNet::infer_raw(const std::vector<Stimulus>& stimuli) const {
  const Inputs in = split(stimuli);
  const Matrix a = nn::leaky_relu(fc_amp_.infer(in.amp));
  const Matrix f = nn::leaky_relu(fc_freq_.infer(in.freq));
  const Matrix h = nn::leaky_relu(fc_hidden_.infer(vcat(a, f)));
  const Matrix p = nn::leaky_relu(fc_prod_.infer(in.prod));
  return fc_out_.infer(vcat(h, p));
}

void SurrogateNet::backward(const Matrix& d_out) {
  const Cache& c = cache_;
  const Matrix d_hp = fc_out_.backward(d_out);
  const int hw = spec_.hidden_width;
  fc_prod_.backward(nn::leaky_relu_backward(c.p_pre, d_hp.bottomRows(spec_.product_width)));
  const Matrix d_af = fc_hidden_.backward(nn::leaky_relu_backward(c.h_pre, d_hp.topRows(hw)));
  fc_amp_.backward(nn::leaky_relu_backward(c.a_pre, d_af.topRows(spec_.amp_width)));
  fc_freq_.backward(nn::leaky_relu_backward(c.f_pre, d_af.bottomRows(spec_.freq_width)));
}

std::vector<Percept> SurrogateNet::infer(const std::vector<Stimulus>& stimuli) const {
  const Matrix raw = infer_raw(stimuli);
  std::vector<Percept> out(stimuli.size());
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    out[i] = Eigen::Map<const Percept>(raw.col(static_cast<Eigen::Index>(i)).data(), spec_.height, spec_.width)
                 .cwiseMax(0.0);
  }
  return out;
}

RenderGradResult SurrogateNet::render_with_grad(const Stimulus& s, const Percept& upstream) const {
  if (upstream.rows() != spec_.height || upstream.cols() != spec_.width) {
    throw DimensionError("surrogate: upstream gradient shape does not match the percept");
  }
  const Inputs in = split({s});
  const Matrix a_pre = fc_amp_.infer(in.amp), f_pre = fc_freq_.infer(in.freq);
  const Matrix h_pre = fc_hidden_.infer(vcat(nn::leaky_relu(a_pre), nn::leaky_relu(f_pre)));
  const Matrix p_pre = fc_prod_.infer(in.prod);
  const Matrix out = fc_out_.infer(vcat(nn::leaky_relu(h_pre), nn::leaky_relu(p_pre)));

  RenderGradResult res;
  res.percept = Eigen::Map<const Percept>(out.data(), spec_.height, spec_.width).cwiseMax(0.0);
  const Matrix up = Eigen::Map<const Eigen::VectorXd>(upstream.data(), upstream.size());
  const Matrix d_out = nn::relu_backward(out, up);
  const Matrix d_hp = fc_out_.weight.value.transpose() * d_out;
  const Matrix d_p = fc_prod_.weight.value.transpose() *
                     nn::leaky_relu_backward(p_pre, d_hp.bottomRows(spec_.product_width));
  const Matrix d_af =
      fc_hidden_.weight.value.transpose() * nn::leaky_relu_backward(h_pre, d_hp.topRows(spec_.hidden_width));
  const Matrix d_a = fc_amp_.weight.value.transpose() * nn::leaky_relu_backward(a_pre, d_af.topRows(spec_.amp_width));
  const Matrix d_f =
      fc_freq_.weight.value.transpose() * nn::leaky_relu_backward(f_pre, d_af.bottomRows(spec_.freq_width));

  res.grad = StimulusGrad::Zero(spec_.n_electrodes, 3);
  res.grad.col(kAmp) = d_a / spec_.amp_norm + d_p.cwiseProduct(s.col(kFreq)) / spec_.product_norm;
  res.grad.col(kFreq) = d_f / spec_.freq_norm + d_p.cwiseProduct(s.col(kAmp)) / spec_.product_norm;
  return res;
}

void SurrogateNet::save(const std::filesystem::path& path) const {
  TensorBundle bundle;
  bundle.put_text("surrogate.spec", spec_json(spec_).dump());
  bundle.put("surrogate.phi", Matrix(phi_.as_vector()), DType::kF64);
  nn::put_params(bundle, const_cast<SurrogateNet*>(this)->params());
  bundle.save(path);
}

SurrogateNet SurrogateNet::load(const std::filesystem::path& path) {
  const TensorBundle bundle = TensorBundle::load(path);
  if (!bundle.contains("surrogate.spec")) throw LoadError(path.string() + ": not a surrogate checkpoint");
  SurrogateSpec spec;
  try {
    spec = spec_from_json(nlohmann::json::parse(bundle.text("surrogate.spec")));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": bad surrogate spec: " + e.what());
  }
  const PatientParams phi =
      PatientParams::from_vector(bundle.matrix("surrogate.phi", PatientParams::kParamCount, 1).col(0));
  SurrogateNet net(spec, phi, 0);
  nn::get_params(bundle, net.params());
  return net;
}

Percept surrogate_render(const Stimulus& s, const SurrogateNet& net) { return net.infer({s}).front(); }

Percept surrogate_render(const Stimulus& s, const PatientParams& phi, const SurrogateNet& net) {
  if (!(phi == net.phi())) throw ContractError("surrogate was fitted for a different patient");
  return surrogate_render(s, net);
}

Percept SurrogateModel::render(const Stimulus& s, const PatientParams& phi) const {
  return surrogate_render(s, phi, net_);
}

RenderGradResult SurrogateModel::render_with_grad(const Stimulus& s, const PatientParams& phi,
                                                  const Percept& upstream) const {
  if (!(phi == net_.phi())) throw ContractError("surrogate was fitted for a different patient");
  return net_.render_with_grad(s, upstream);
}

// ---- training -------------------------------------------------------------

void SurrogateTrainConfig::validate() const {
  if (epochs < 0) throw InvalidParameter("surrogate training: epochs must be >= 0");
  if (batch_size < 1) throw InvalidParameter("surrogate training: batch_size must be >= 1");
  if (!(learning_rate >= 0) || !(weight_decay >= 0)) throw InvalidParameter("surrogate training: bad optimizer");
}

void write_surrogate_log(const std::vector<SurrogateEpoch>& log, std::ostream& os) {
  os << "epoch,train_mae,val_mae\n";
  os.precision(17);
  for (const auto& r : log) os << r.epoch << ',' << r.train_mae << ',' << r.val_mae << '\n';
}

void write_surrogate_log(const std::vector<SurrogateEpoch>& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  write_surrogate_log(log, os);
}

double surrogate_mae(const SurrogateNet& net, const SurrogateDataset& data, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  constexpr std::size_t kChunk = 256;
  double acc = 0.0;
  for (std::size_t i = begin; i < end; i += kChunk) {
    const std::size_t j = std::min(end, i + kChunk);
    const std::vector<Stimulus> batch(data.stimuli.begin() + static_cast<std::ptrdiff_t>(i),
                                      data.stimuli.begin() + static_cast<std::ptrdiff_t>(j));
    const auto out = net.infer(batch);
    for (std::size_t k = i; k < j; ++k) acc += mae(data.percepts[k], out[k - i]);
  }
  return acc / static_cast<double>(end - begin);
}

SurrogateTrainResult train_surrogate(SurrogateNet net, const SurrogateDataset& data, const SurrogateTrainConfig& cfg) {
  cfg.validate();
  if (data.n_train == 0 || data.n_train > data.size()) throw InvalidParameter("surrogate training: empty train split");
  if (!(data.phi == net.phi())) throw ContractError("surrogate training: dataset and network patients differ");
  const Eigen::Index hw = static_cast<Eigen::Index>(net.spec().height) * net.spec().width;
  if (data.percepts.front().size() != hw) throw DimensionError("surrogate training: percept size mismatch");

  Rng rng(cfg.seed);
  nn::AdamW opt(cfg.learning_rate, cfg.weight_decay);
  const auto params = net.params();
  std::vector<std::size_t> order(data.n_train);
  std::iota(order.begin(), order.end(), 0);

  SurrogateTrainResult res;
  res.log.push_back({0, surrogate_mae(net, data, 0, data.n_train), surrogate_mae(net, data, data.n_train, data.size())});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double train_acc = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Stimulus> stims;
      Matrix target(hw, static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        stims.push_back(data.stimuli[order[i]]);
        target.col(static_cast<Eigen::Index>(i - start)) =
            Eigen::Map<const Eigen::VectorXd>(data.percepts[order[i]].data(), hw);
      }
      const Matrix diff = net.forward(stims) - target;
      const double n = static_cast<double>(diff.size());
      const double loss = diff.cwiseAbs().sum() / n;
      if (!std::isfinite(loss)) {
        throw DivergenceError("train_surrogate: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
      train_acc += loss * static_cast<double>(end - start);
      nn::zero_grad(params);
      net.backward(diff.unaryExpr([n](double v) { return v > 0 ? 1.0 / n : (v < 0 ? -1.0 / n : 0.0); }));
      opt.step(params);
      if (!nn::all_finite(params)) {
        throw DivergenceError("train_surrogate: non-finite weights at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
    }
    res.log.push_back({epoch, train_acc / static_cast<double>(order.size()),
                       surrogate_mae(net, data, data.n_train, data.size())});
  }
  res.val_mae = res.log.back().val_mae;
  res.net = std::move(net);
  return res;
}

// ---- exploitation gap -----------------------------------------------------

GapReport exploit_gap(const std::vector<Stimulus>& proposed, const TargetSet& targets,
                      const std::vector<Stimulus>& random, const SurrogateNet& net, const ForwardModel& fwd,
                      const FeatureExtractor* fx) {
  if (proposed.size() != targets.size()) throw DimensionError("exploit_gap: one stimulus per target required");
  const LossConfig cfg{kReportingWeights, 5, SmoothMode::kAbsolute};
  GapReport rep;
  for (std::size_t i = 0; i < proposed.size(); ++i) {
    const Percept truth = fwd.render(proposed[i], net.phi());
    const Percept approx = surrogate_render(proposed[i], net);
    GapRecord r;
    r.target_id = i < targets.ids.size() ? targets.ids[i] : std::to_string(i);
    r.gap_mae = mae(approx, truth);
    r.joint_true = evaluate_loss(targets.images[i], truth, cfg, fx).joint;
    r.joint_surrogate = evaluate_loss(targets.images[i], approx, cfg, fx).joint;
    rep.mean_gap_proposed += r.gap_mae;
    rep.records.push_back(std::move(r));
  }
  if (!proposed.empty()) rep.mean_gap_proposed /= static_cast<double>(proposed.size());
  for (const auto& s : random) rep.mean_gap_random += mae(surrogate_render(s, net), fwd.render(s, net.phi()));
  if (!random.empty()) rep.mean_gap_random /= static_cast<double>(random.size());
  return rep;
}

GapReport exploit_gap(const EncoderNet& encoder, const SurrogateNet& net, const ForwardModel& fwd,
                      const TargetSet& targets, const FeatureExtractor* fx, const SurrogateDatasetSpec& spec,
                      std::size_t n_random, std::uint64_t seed) {
  const std::vector<PatientParams> phis(targets.size(), net.phi());
  const auto proposed = encode(encoder, targets.images, phis);
  Rng rng(seed);
  std::vector<Stimulus> random;
  for (std::size_t i = 0; i < n_random; ++i) random.push_back(random_surrogate_stimulus(spec, fwd.n_electrodes(), rng));
  return exploit_gap(proposed, targets, random, net, fwd, fx);
}

void write_gap_report(const GapReport& report, std::ostream& os) {
  os << "target_id,gap_mae,joint_true,joint_surrogate\n";
  os.precision(17);
  for (const auto& r : report.records) {
    os << r.target_id << ',' << r.gap_mae << ',' << r.joint_true << ',' << r.joint_surrogate << '\n';
  }
}

void write_gap_report(const GapReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  write_gap_report(report, os);
}

}  // namespace phosphene
