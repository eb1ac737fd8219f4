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

#include "phosphene/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

namespace phosphene {

using nn::Matrix;

// ---- naive ----------------------------------------------------------------

std::vector<int> electrode_pixels(const ImplantLayout& layout, const AxonMapGrid& map) {
  std::vector<int> out(layout.n_electrodes());
  for (int e = 0; e < layout.n_electrodes(); ++e) {
    const Eigen::RowVector2d pos = layout.electrode_positions.row(e);
    Eigen::Index best = 0;
    (map.pixel_positions.rowwise() - pos).rowwise().squaredNorm().minCoeff(&best);
    out[e] = static_cast<int>(best);
  }
  return out;
}

Stimulus naive_encode(const Percept& t, const std::vector<int>& pixels) {
  Stimulus s = Stimulus::Zero(static_cast<Eigen::Index>(pixels.size()), 3);
  for (std::size_t e = 0; e < pixels.size(); ++e) {
    if (pixels[e] < 0 || pixels[e] >= t.size()) throw IndexError("electrode pixel outside the target");
    const double v = t.data()[pixels[e]];
    if (v > 0.0) s.row(static_cast<Eigen::Index>(e)) << kNaiveFrequency, v, kNaivePulseDuration;
  }
  return s;
}

Stimulus naive_encode(const Percept& t, const ImplantLayout& layout, const AxonMapGrid& map) {
  if (t.rows() != map.height || t.cols() != map.width) throw DimensionError("target does not match the percept grid");
  return naive_encode(t, electrode_pixels(layout, map));
}

// ---- EncoderSpec ----------------------------------------------------------

void EncoderSpec::validate() const {
  if (height < 1 || width < 1 || n_electrodes < 1) throw InvalidParameter("encoder: empty target or implant");
  if (target_width < 1 || phi_width < 1 || trunk_width < 1 || x_width < 1) {
    throw InvalidParameter("encoder: layer widths must be positive");
  }
  if (!(amp_scale > 0) || !(freq_scale > 0) || !(pdur_shift > 0)) {
    throw InvalidParameter("encoder: output scalings must be positive");
  }
}

long EncoderSpec::parameter_count() const {
  const long hw = static_cast<long>(height) * width, ne = n_electrodes, k = PatientParams::kParamCount;
  auto fc = [](long in, long out) { return in * out + out; };
  return fc(hw, target_width) + 2 * k + fc(k, phi_width) + fc(phi_width, phi_width) +
         fc(target_width + phi_width, trunk_width) + fc(trunk_width, x_width) + fc(x_width, ne) +
         2 * (x_width + ne) + 2 * fc(x_width + ne, ne);
}

EncoderSpec EncoderSpec::desk(int height, int width, int n_electrodes) {
  EncoderSpec s;
  s.height = height;
  s.width = width;
  s.n_electrodes = n_electrodes;
  s.target_width = 128;
  s.phi_width = 16;
  s.trunk_width = 128;
  s.x_width = 64;
  return s;
}

namespace {

nlohmann::json spec_json(const EncoderSpec& s) {
  return {{"height", s.height},         {"width", s.width},
          {"n_electrodes", s.n_electrodes}, {"target_width", s.target_width},
          {"phi_width", s.phi_width},   {"trunk_width", s.trunk_width},
          {"x_width", s.x_width},       {"amp_scale", s.amp_scale},
          {"freq_scale", s.freq_scale}, {"pdur_shift", s.pdur_shift},
          {"head_init_scale", s.head_init_scale}, {"amp_bias", s.amp_bias},
          {"freq_bias", s.freq_bias},   {"pdur_bias", s.pdur_bias}};
}

EncoderSpec spec_from_json(const nlohmann::json& j) {
  EncoderSpec s;
  s.height = j.at("height");
  s.width = j.at("width");
  s.n_electrodes = j.at("n_electrodes");
  s.target_width = j.at("target_width");
  s.phi_width = j.at("phi_width");
  s.trunk_width = j.at("trunk_width");
  s.x_width = j.at("x_width");
  s.amp_scale = j.at("amp_scale");
  s.freq_scale = j.at("freq_scale");
  s.pdur_shift = j.at("pdur_shift");
  s.head_init_scale = j.value("head_init_scale", s.head_init_scale);
  s.amp_bias = j.value("amp_bias", s.amp_bias);
  s.freq_bias = j.value("freq_bias", s.freq_bias);
  s.pdur_bias = j.value("pdur_bias", s.pdur_bias);
  return s;
}

Matrix vcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

Eigen::Matrix<double, PatientParams::kParamCount, 1> normalize_phi(const PatientParams& phi) {
  const auto ref = PatientParams{}.as_vector();
  return (phi.as_vector().array() / ref.array() - 1.0).matrix();
}

// ---- EncoderNet -----------------------------------------------------------

EncoderNet::EncoderNet(const EncoderSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec.validate();
  Rng rng(seed);
  const int hw = spec.height * spec.width, ne = spec.n_electrodes, k = PatientParams::kParamCount;
  fc_t_ = nn::Dense("target.fc", hw, spec.target_width, rng);
  bn_p_ = nn::BatchNorm("phi.bn", k);
  fc_p1_ = nn::Dense("phi.fc1", k, spec.phi_width, rng);
  fc_p2_ = nn::Dense("phi.fc2", spec.phi_width, spec.phi_width, rng);
  fc_1_ = nn::Dense("trunk.fc1", spec.target_width + spec.phi_width, spec.trunk_width, rng);
  fc_2_ = nn::Dense("trunk.fc2", spec.trunk_width, spec.x_width, rng);
  fc_amp_ = nn::Dense("head.amp", spec.x_width, ne, rng, spec.head_init_scale);
  bn_c_ = nn::BatchNorm("head.bn", spec.x_width + ne);
  fc_freq_ = nn::Dense("head.freq", spec.x_width + ne, ne, rng, spec.head_init_scale);
  fc_pdur_ = nn::Dense("head.pdur", spec.x_width + ne, ne, rng, spec.head_init_scale);
  fc_amp_.bias.value.setConstant(spec.amp_bias);
  fc_freq_.bias.value.setConstant(spec.freq_bias);
  fc_pdur_.bias.value.setConstant(spec.pdur_bias);
}

void EncoderNet::check_inputs(const Matrix& targets, const Matrix& phis) const {
  if (targets.rows() != static_cast<Eigen::Index>(spec_.height) * spec_.width) {
    throw DimensionError("encoder: target has " + std::to_string(targets.rows()) + " pixels, expected " +
                         std::to_string(spec_.height * spec_.width));
  }
  if (phis.rows() != PatientParams::kParamCount || phis.cols() != targets.cols()) {
    throw DimensionError("encoder: patient parameters must be 12 x batch");
  }
}

std::vector<Stimulus> EncoderNet::assemble(const Matrix& f_pre, const Matrix& amp_raw, const Matrix& d_pre) const {
  std::vector<Stimulus> out(static_cast<std::size_t>(f_pre.cols()));
  for (Eigen::Index b = 0; b < f_pre.cols(); ++b) {
    Stimulus& s = out[static_cast<std::size_t>(b)];
    s.resize(spec_.n_electrodes, 3);
    s.col(kFreq) = spec_.freq_scale * f_pre.col(b).cwiseMax(0.0);
    s.col(kAmp) = spec_.amp_scale * amp_raw.col(b);
    s.col(kPdur) = (d_pre.col(b).cwiseMax(0.0).array() + spec_.pdur_shift).matrix();
  }
  return out;
}

std::vector<Stimulus> EncoderNet::forward(const Matrix& targets, const Matrix& phis, bool training) {
  if (!training) return infer(targets, phis);
  check_inputs(targets, phis);
  Cache& c = cache_;
  c.a_pre = fc_t_.forward(targets);
  c.p1_pre = fc_p1_.forward(bn_p_.forward(phis, true));
  c.p2_pre = fc_p2_.forward(nn::leaky_relu(c.p1_pre));
  c.h_pre = fc_1_.forward(vcat(nn::leaky_relu(c.a_pre), nn::leaky_relu(c.p2_pre)));
  c.x_pre = fc_2_.forward(nn::leaky_relu(c.h_pre));
  const Matrix x = nn::leaky_relu(c.x_pre);
  c.amp_pre = fc_amp_.forward(x);
  const Matrix amp_raw = nn::relu(c.amp_pre);
  const Matrix cn = bn_c_.forward(vcat(x, amp_raw), true);
  c.f_pre = fc_freq_.forward(cn);
  c.d_pre = fc_pdur_.forward(cn);
  return assemble(c.f_pre, amp_raw, c.d_pre);
}

std::vector<Stimulus> EncoderNet::infer(const Matrix& targets, const Matrix& phis) const {
  check_inputs(targets, phis);
  const Matrix a = nn::leaky_relu(fc_t_.infer(targets));
  const Matrix p1 = nn::leaky_relu(fc_p1_.infer(bn_p_.infer(phis)));
  const Matrix p2 = nn::leaky_relu(fc_p2_.infer(p1));
  const Matrix h = nn::leaky_relu(fc_1_.infer(vcat(a, p2)));
  const Matrix x = nn::leaky_relu(fc_2_.infer(h));
  const Matrix amp_raw = nn::relu(fc_amp_.infer(x));
  const Matrix cn = bn_c_.infer(vcat(x, amp_raw));
  return assemble(fc_freq_.infer(cn), amp_raw, fc_pdur_.infer(cn));
}

void EncoderNet::backward(const std::vector<StimulusGrad>& grads) {
  const Cache& c = cache_;
  const auto batch = static_cast<Eigen::Index>(grads.size());
  if (batch != c.f_pre.cols()) throw DimensionError("encoder: gradient batch does not match the last forward");
  const int ne = spec_.n_electrodes;
  Matrix g_freq(ne, batch), g_amp(ne, batch), g_pdur(ne, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& g = grads[static_cast<std::size_t>(b)];
    if (g.rows() != ne) throw DimensionError("encoder: gradient electrode count mismatch");
    g_freq.col(b) = g.col(kFreq);
    g_amp.col(b) = g.col(kAmp);
    g_pdur.col(b) = g.col(kPdur);
  }
  const Matrix d_cn = fc_freq_.backward(nn::relu_backward(c.f_pre, spec_.freq_scale * g_freq)) +
                      fc_pdur_.backward(nn::relu_backward(c.d_pre, g_pdur));
  const Matrix d_c = bn_c_.backward(d_cn);
  const int xw = spec_.x_width;
  const Matrix d_amp_raw = d_c.bottomRows(ne) + spec_.amp_scale * g_amp;
  Matrix d_x = d_c.topRows(xw) + fc_amp_.backward(nn::relu_backward(c.amp_pre, d_amp_raw));
  const Matrix d_h = fc_2_.backward(nn::leaky_relu_backward(c.x_pre, d_x));
  const Matrix d_cat = fc_1_.backward(nn::leaky_relu_backward(c.h_pre, d_h));
  const int tw = spec_.target_width;
  fc_t_.backward(nn::leaky_relu_backward(c.a_pre, d_cat.topRows(tw)));
  const Matrix d_p1 = fc_p2_.backward(nn::leaky_relu_backward(c.p2_pre, d_cat.bottomRows(spec_.phi_width)));
  bn_p_.backward(fc_p1_.backward(nn::leaky_relu_backward(c.p1_pre, d_p1)));
}

nn::ParamList EncoderNet::params() {
  nn::ParamList out;
  auto add = [&out](nn::ParamList ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  add(fc_t_.params());
  add(bn_p_.params());
  add(fc_p1_.params());
  add(fc_p2_.params());
  add(fc_1_.params());
  add(fc_2_.params());
  add(fc_amp_.params());
  add(bn_c_.params());
  add(fc_freq_.params());
  add(fc_pdur_.params());
  return out;
}

void EncoderNet::zero_heads() {
  for (nn::Dense* d : {&fc_amp_, &fc_freq_, &fc_pdur_}) {
    d->weight.value.setZero();
    d->bias.value.setZero();
  }
}

void EncoderNet::save(const std::filesystem::path& path) const {
  TensorBundle bundle;
  bundle.put_text("encoder.spec", spec_json(spec_).dump());
  auto* self = const_cast<EncoderNet*>(this);
  nn::ParamList ps;
  for (nn::Dense* d : {&self->fc_t_, &self->fc_p1_, &self->fc_p2_, &self->fc_1_, &self->fc_2_, &self->fc_amp_,
                       &self->fc_freq_, &self->fc_pdur_}) {
    ps.push_back(&d->weight);
    ps.push_back(&d->bias);
  }
  nn::put_params(bundle, ps);
  bn_p_.put(bundle);
  bn_c_.put(bundle);
  bundle.save(path);
}

EncoderNet EncoderNet::load(const std::filesystem::path& path) {
  const TensorBundle bundle = TensorBundle::load(path);
  if (!bundle.contains("encoder.spec")) throw LoadError(path.string() + ": not an encoder checkpoint");
  EncoderSpec spec;
  try {
    spec = spec_from_json(nlohmann::json::parse(bundle.text("encoder.spec")));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": bad encoder spec: " + e.what());
  }
  EncoderNet net(spec, 0);
  nn::ParamList ps;
  for (nn::Dense* d : {&net.fc_t_, &net.fc_p1_, &net.fc_p2_, &net.fc_1_, &net.fc_2_, &net.fc_amp_, &net.fc_freq_,
                       &net.fc_pdur_}) {
    ps.push_back(&d->weight);
    ps.push_back(&d->bias);
  }
  nn::get_params(bundle, ps);
  net.bn_p_.get(bundle);
  net.bn_c_.get(bundle);
  return net;
}

Matrix stack_targets(const std::vector<Percept>& targets) {
  if (targets.empty()) return {};
  Matrix out(targets.front().size(), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].size() != out.rows()) throw DimensionError("targets differ in size");
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(targets[i].data(), out.rows());
  }
  return out;
}

Matrix stack_phis(const std::vector<PatientParams>& phis) {
  Matrix out(PatientParams::kParamCount, static_cast<Eigen::Index>(phis.size()));
  for (std::size_t i = 0; i < phis.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = normalize_phi(phis[i]);
  return out;
}

Stimulus encode(const EncoderNet& net, const Percept& t, const PatientParams& phi) {
  if (t.rows() != net.spec().height || t.cols() != net.spec().width) {
    throw DimensionError("encoder: target shape does not match the network");
  }
  return net.infer(stack_targets({t}), stack_phis({phi})).front();
}

std::vector<Stimulus> encode(const EncoderNet& net, const std::vector<Percept>& targets,
                             const std::vector<PatientParams>& phis) {
  if (targets.size() != phis.size()) throw DimensionError("encoder: one patient per target required");
  if (targets.empty()) return {};
  return net.infer(stack_targets(targets), stack_phis(phis));
}

// ---- training -------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw InvalidParameter("learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidParameter("momentum must lie in [0, 1)");
  if (epochs < 0) throw InvalidParameter("epochs must be >= 0");
  sampler.validate();
  schedule.validate();
}

void write_training_log(const std::vector<EpochRecord>& log, std::ostream& os) {
  os << "epoch,split,mae,smooth,feature,joint\n";
  os.precision(17);
  for (const auto& r : log) {
    os << r.epoch << ',' << r.split << ',' << r.terms.mae << ',' << r.terms.smooth << ',' << r.terms.feature << ','
       << r.terms.joint << '\n';
  }
}

void write_training_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  write_training_log(log, os);
}

std::vector<PatientParams> validation_patients(const PatientRanges& ranges, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PatientParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_patient(ranges, rng));
  return out;
}

namespace {

double reporting_joint(const LossTerms& t) {
  return t.mae + kReportingWeights.alpha * t.smooth + kReportingWeights.beta * t.feature;
}

void accumulate(LossTerms& acc, const LossTerms& t, double w) {
  acc.mae += w * t.mae;
  acc.smooth += w * t.smooth;
  acc.feature += w * t.feature;
}

}  // namespace

LossTerms mean_loss(const std::vector<Percept>& targets, const std::vector<Stimulus>& stimuli,
                    const std::vector<PatientParams>& phis, const ForwardModel& fwd, const FeatureExtractor* fx,
                    int laplacian_k, SmoothMode mode) {
  if (targets.size() != stimuli.size() || targets.size() != phis.size()) {
    throw DimensionError("mean_loss: targets, stimuli and patients differ in count");
  }
  LossTerms acc;
  if (targets.empty()) return acc;
  const LossConfig cfg{kReportingWeights, laplacian_k, mode};
  const double w = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    accumulate(acc, evaluate_loss(targets[i], fwd.render(stimuli[i], phis[i]), cfg, fx), w);
  }
  acc.joint = reporting_joint(acc);
  return acc;
}

namespace {

bool all_finite(const std::vector<Stimulus>& stims) {
  for (const auto& s : stims) {
    if (!s.allFinite()) return false;
  }
  return true;
}

}  // namespace

TrainResult train_encoder(EncoderNet net, const TargetSet& train, const TargetSet& val, const ForwardModel& fwd,
                          const FeatureExtractor* fx, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.size() == 0) throw InvalidParameter("train_encoder: empty training set");
  if (fwd.n_electrodes() != net.spec().n_electrodes || fwd.height() != net.spec().height ||
      fwd.width() != net.spec().width) {
    throw DimensionError("train_encoder: network and forward model disagree on shapes");
  }

  Rng rng(cfg.seed);
  const auto val_phis = validation_patients(cfg.sampler, val.size(), cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  auto validate_net = [&](const EncoderNet& n) {
    return mean_loss(val.images, encode(n, val.images, val_phis), val_phis, fwd, fx, cfg.laplacian_k,
                     cfg.smooth_mode);
  };

  TrainResult result;
  const LossTerms initial = val.size() ? validate_net(net) : LossTerms{};
  result.log.push_back({0, "val", initial});
  result.net = net;
  result.best_epoch = 0;
  result.best_val_joint = val.size() ? initial.joint : std::numeric_limits<double>::infinity();

  nn::SgdNesterov opt(cfg.learning_rate, cfg.momentum);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto params = net.params();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Schedule epochs count from 0.
    const ScheduleStep step = schedule_step(cfg.schedule, epoch - 1);
    opt.lr = cfg.learning_rate * step.lr_multiplier;
    const LossConfig lcfg{step.weights, cfg.laplacian_k, cfg.smooth_mode};
    shuffle(order, rng);

    LossTerms epoch_terms;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<Eigen::Index>(end - start);
      std::vector<Percept> targets;
      std::vector<PatientParams> phis;
      for (std::size_t i = start; i < end; ++i) {
        targets.push_back(train.images[order[i]]);
        phis.push_back(sample_patient(cfg.sampler, rng));
      }
      const auto stims = net.forward(stack_targets(targets), stack_phis(phis), true);
      if (!all_finite(stims)) {
        throw DivergenceError("train_encoder: non-finite stimulus at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }

      std::vector<StimulusGrad> grads(static_cast<std::size_t>(bsz));
      double batch_joint = 0.0;
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const auto i = static_cast<std::size_t>(b);
        LossTerms terms;
        const auto r = fwd.render_backprop(stims[i], phis[i], [&](const Percept& p) {
          Percept g;
          terms = evaluate_loss(targets[i], p, lcfg, fx, &g);
          return Percept(g / static_cast<double>(bsz));
        });
        grads[i] = r.grad;
        batch_joint += terms.joint;
        accumulate(epoch_terms, terms, 1.0 / static_cast<double>(train.size()));
      }
      if (!std::isfinite(batch_joint)) {
        throw DivergenceError("train_encoder: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
      nn::zero_grad(params);
      net.backward(grads);
      if (cfg.clip_norm > 0) nn::clip_global_norm(params, cfg.clip_norm);
      if (!nn::all_finite(params)) {
        throw DivergenceError("train_encoder: non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
      opt.step(params);
      if (!nn::all_finite(params)) {
        throw DivergenceError("train_encoder: non-finite weights at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
    }
    epoch_terms.joint = reporting_joint(epoch_terms);
    result.log.push_back({epoch, "train", epoch_terms});

    if (val.size()) {
      const LossTerms v = validate_net(net);
      result.log.push_back({epoch, "val", v});
      if (!std::isfinite(v.joint)) {
        throw DivergenceError("train_encoder: non-finite validation loss at epoch " + std::to_string(epoch));
      }
      if (v.joint < result.best_val_joint) {
        result.best_val_joint = v.joint;
        result.best_epoch = epoch;
        result.net = net;
      }
    } else {
      result.net = net;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(epoch, net);
  }
  return result;
}

// ---- direct inversion -----------------------------------------------------

InvertResult invert_direct(const Percept& t, const PatientParams& phi, const Stimulus& init, const ForwardModel& fwd,
                           const FeatureExtractor* fx, const InvertConfig& cfg) {
  if (cfg.steps < 0 || !(cfg.learning_rate > 0) || !(cfg.growth >= 1) || !(cfg.backoff > 0 && cfg.backoff < 1)) {
    throw InvalidParameter("invert_direct: bad step configuration");
  }
  Stimulus s = init;
  if (cfg.fill_support) {
    for (Eigen::Index e = 0; e < s.rows(); ++e) {
      if (s(e, kAmp) == 0.0 && s(e, kFreq) == 0.0 && s(e, kPdur) == 0.0) {
        s(e, kFreq) = kNaiveFrequency;
        s(e, kPdur) = kNaivePulseDuration;
      }
    }
  }

  auto evaluate = [&](const Stimulus& x, LossTerms& terms) {
    return fwd.render_backprop(x, phi, [&](const Percept& p) {
      Percept g;
      terms = evaluate_loss(t, p, cfg.loss, fx, &g);
      return g;
    });
  };

  InvertResult res;
  LossTerms terms;
  StimulusGrad grad = evaluate(s, terms).grad;
  res.initial = terms;
  if (!std::isfinite(terms.joint)) throw DivergenceError("invert_direct: non-finite loss at the initial stimulus");

  const Eigen::RowVector3d precond = cfg.column_scale.array().square();
  double lr = cfg.learning_rate;
  for (int step = 0; step < cfg.steps; ++step) {
    Stimulus cand = s - lr * (grad.array().rowwise() * precond.array()).matrix();
    cand = cand.cwiseMax(0.0);
    LossTerms cand_terms;
    StimulusGrad cand_grad;
    bool ok = cand.allFinite();
    if (ok) {
      cand_grad = evaluate(cand, cand_terms).grad;
      ok = std::isfinite(cand_terms.joint) && cand_grad.allFinite();
      if (!ok) res.warning = true;
    } else {
      res.warning = true;
    }
    if (ok && cand_terms.joint <= terms.joint) {
      s = std::move(cand);
      grad = std::move(cand_grad);
      terms = cand_terms;
      ++res.accepted;
      lr *= cfg.growth;
    } else {
      lr *= cfg.backoff;
    }
    res.history.push_back(terms.joint);
    if (lr < cfg.min_learning_rate) {
      res.warning = res.warning || terms.joint > 0.0;
      break;
    }
  }
  res.stimulus = std::move(s);
  res.terms = terms;
  return res;
}

// ---- classifier -----------------------------------------------------------

Classifier::Classifier(int height, int width, std::uint64_t seed) : height_(height), width_(width) {
  if (height < 4 || width < 4) throw InvalidParameter("classifier input must be at least 4 x 4");
  Rng rng(seed);
  conv1_ = nn::Conv2d("clf.conv1", 1, 8, 3, rng);
  conv2_ = nn::Conv2d("clf.conv2", 8, 16, 3, rng);
  fc_ = nn::Dense("clf.fc", 16 * (height / 4) * (width / 4), kClasses, rng);
}

nn::ParamList Classifier::params() {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias, &fc_.weight, &fc_.bias};
}

nn::Vector Classifier::logits(const Percept& img) const {
  if (img.rows() != height_ || img.cols() != width_) throw DimensionError("classifier: input shape mismatch");
  const Matrix x = Eigen::Map<const Eigen::RowVectorXd>(img.data(), img.size());
  const int h2 = height_ / 2, w2 = width_ / 2;
  const Matrix y1 = nn::avg_pool2(nn::relu(conv1_.infer(x, height_, width_)), height_, width_);
  const Matrix y2 = nn::avg_pool2(nn::relu(conv2_.infer(y1, h2, w2)), h2, w2);
  const Matrix flat = Eigen::Map<const Eigen::VectorXd>(Matrix(y2.transpose()).data(), y2.size());
  return fc_.infer(flat);
}

int Classifier::predict(const Percept& img) const {
  Eigen::Index best = 0;
  logits(img).maxCoeff(&best);
  return static_cast<int>(best);
}

double Classifier::accuracy(const std::vector<Percept>& images, const std::vector<int>& labels) const {
  if (images.size() != labels.size()) throw DimensionError("classifier: one label per image required");
  if (images.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) hits += predict(images[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

void Classifier::train(const TargetSet& set, int epochs, double learning_rate, std::uint64_t seed) {
  if (!set.labeled() || set.labels.size() != set.size()) throw InvalidParameter("classifier: labeled set required");
  frozen_ = false;
  target_accuracy_ = 0.0;
  Rng rng(seed);
  nn::AdamW opt(learning_rate, 1e-4);
  const auto ps = params();
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  const int h2 = height_ / 2, w2 = width_ / 2, h4 = h2 / 2, w4 = w2 / 2;
  constexpr std::size_t kBatch = 32;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t end = std::min(order.size(), start + kBatch);
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::zero_grad(ps);
      for (std::size_t i = start; i < end; ++i) {
        const Percept& img = set.images[order[i]];
        if (img.rows() != height_ || img.cols() != width_) throw DimensionError("classifier: input shape mismatch");
        const Matrix x = Eigen::Map<const Eigen::RowVectorXd>(img.data(), img.size());
        const Matrix z1 = conv1_.forward(x, height_, width_);
        const Matrix y1 = nn::avg_pool2(nn::relu(z1), height_, width_);
        const Matrix z2 = conv2_.forward(y1, h2, w2);
        const Matrix y2 = nn::avg_pool2(nn::relu(z2), h2, w2);
        const Matrix flat = Eigen::Map<const Eigen::VectorXd>(Matrix(y2.transpose()).data(), y2.size());
        const Matrix logit = fc_.forward(flat);
        // softmax cross-entropy
        Eigen::VectorXd p = (logit.col(0).array() - logit.maxCoeff()).exp();
        p /= p.sum();
        p(set.labels[order[i]]) -= 1.0;
        const Matrix d_flat = fc_.backward(p * scale);
        const Matrix d_y2 = Eigen::Map<const Matrix>(d_flat.data(), h4 * w4, 16).transpose();
        const Matrix d_y1 = conv2_.backward(nn::relu_backward(z2, nn::avg_pool2_backward(d_y2, h2, w2)));
        conv1_.backward(nn::relu_backward(z1, nn::avg_pool2_backward(d_y1, height_, width_)));
      }
      opt.step(ps);
    }
  }
}

void Classifier::freeze(const std::vector<Percept>& targets, const std::vector<int>& labels) {
  target_accuracy_ = accuracy(targets, labels);
  frozen_ = true;
}

void Classifier::save(const std::filesystem::path& path) const {
  TensorBundle bundle;
  bundle.put_text("classifier.shape", std::to_string(height_) + " " + std::to_string(width_));
  bundle.put("classifier.target_accuracy", Matrix::Constant(1, 1, frozen_ ? target_accuracy_ : -1.0));
  nn::put_params(bundle, const_cast<Classifier*>(this)->params());
  bundle.save(path);
}

Classifier Classifier::load(const std::filesystem::path& path) {
  const TensorBundle bundle = TensorBundle::load(path);
  if (!bundle.contains("classifier.shape")) throw LoadError(path.string() + ": not a classifier checkpoint");
  int h = 0, w = 0;
  if (std::sscanf(bundle.text("classifier.shape").c_str(), "%d %d", &h, &w) != 2) {
    throw LoadError(path.string() + ": bad classifier shape");
  }
  Classifier clf(h, w, 0);
  nn::get_params(bundle, clf.params());
  const double acc = bundle.matrix("classifier.target_accuracy", 1, 1)(0, 0);
  clf.frozen_ = acc >= 0.0;
  clf.target_accuracy_ = clf.frozen_ ? acc : 0.0;
  return clf;
}

double recognition_accuracy(const std::vector<Percept>& phosphenes, const std::vector<int>& labels,
                            const Classifier& clf) {
  if (!clf.frozen()) throw ContractError("recognition_accuracy: classifier is not frozen");
  if (clf.target_accuracy() < kMinClassifierAccuracy) {
    throw ContractError("recognition_accuracy: classifier target accuracy " + std::to_string(clf.target_accuracy()) +
                        " is below 0.99");
  }
  return clf.accuracy(phosphenes, labels) / clf.target_accuracy();
}

}  // namespace phosphene
