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

#include "phosphene/losses.hpp"

#include <cmath>
#include <sstream>

#include "phosphene/tensor_io.hpp"

namespace phosphene {
namespace {

void check_same_shape(const Percept& a, const Percept& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("percept shapes differ: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

Eigen::VectorXd binomial_row(int n) {
  Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
  for (int i = 1; i < n; ++i) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(i + 1);
    next.head(i) += row;
    next.tail(i) += row;
    row = next;
  }
  return row;
}

void check_k(int k) {
  if (k < 3 || k % 2 == 0) throw InvalidParameter("laplacian filter size must be odd and >= 3");
}

// Adjoint of laplacian_response: scatters g through the kernel taps.
Percept laplacian_adjoint(const Percept& g, int k) {
  const Eigen::MatrixXd kern = laplacian_kernel(k);
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols()), half = k / 2;
  Percept out = Percept::Zero(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gv = g(r, c);
      if (gv == 0.0) continue;
      for (int i = 0; i < k; ++i) {
        const int rr = reflect101(r + i - half, h);
        for (int j = 0; j < k; ++j) out(rr, reflect101(c + j - half, w)) += gv * kern(i, j);
      }
    }
  }
  return out;
}

nn::Matrix to_channels(const Percept& img, int channels) {
  nn::Matrix x(channels, img.size());
  for (int ch = 0; ch < channels; ++ch) {
    x.row(ch) = Eigen::Map<const Eigen::RowVectorXd>(img.data(), img.size());
  }
  return x;
}

}  // namespace

double mae(const Percept& t, const Percept& t_hat) {
  check_same_shape(t, t_hat);
  return (t - t_hat).cwiseAbs().mean();
}

Percept mae_grad(const Percept& t, const Percept& t_hat) {
  check_same_shape(t, t_hat);
  const double n = static_cast<double>(t.size());
  return (t_hat - t).unaryExpr([n](double d) { return d > 0 ? 1.0 / n : (d < 0 ? -1.0 / n : 0.0); });
}

Eigen::MatrixXd laplacian_kernel(int k) {
  check_k(k);
  const Eigen::VectorXd smooth = binomial_row(k);
  const Eigen::VectorXd inner = binomial_row(k - 2);
  Eigen::VectorXd d2 = Eigen::VectorXd::Zero(k);
  const double base[3] = {1.0, -2.0, 1.0};
  for (int i = 0; i < k - 2; ++i) {
    for (int j = 0; j < 3; ++j) d2(i + j) += inner(i) * base[j];
  }
  return d2 * smooth.transpose() + smooth * d2.transpose();
}

Percept laplacian_response(const Percept& img, int k) {
  const Eigen::MatrixXd kern = laplacian_kernel(k);
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols()), half = k / 2;
  Percept out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // Kernel entries are integers summing to zero, so differencing against
      // the centre pixel gives exactly zero on flat regions.
      const double centre = img(r, c);
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        const int rr = reflect101(r + i - half, h);
        for (int j = 0; j < k; ++j) acc += kern(i, j) * (img(rr, reflect101(c + j - half, w)) - centre);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

double laplacian_smooth(const Percept& t_hat, int k, SmoothMode mode) {
  const Percept resp = laplacian_response(t_hat, k);
  return mode == SmoothMode::kAbsolute ? resp.cwiseAbs().mean() : resp.mean();
}

Percept laplacian_smooth_grad(const Percept& t_hat, int k, SmoothMode mode) {
  const double n = static_cast<double>(t_hat.size());
  Percept g;
  if (mode == SmoothMode::kAbsolute) {
    g = laplacian_response(t_hat, k).unaryExpr(
        [n](double v) { return v > 0 ? 1.0 / n : (v < 0 ? -1.0 / n : 0.0); });
  } else {
    check_k(k);
    g = Percept::Constant(t_hat.rows(), t_hat.cols(), 1.0 / n);
  }
  return laplacian_adjoint(g, k);
}

// ---- feature extractor ----------------------------------------------------

FeatureExtractor::FeatureExtractor(std::vector<LayerSpec> layers, std::vector<nn::Matrix> weights,
                                   std::vector<nn::Vector> biases, std::string tap)
    : layers_(std::move(layers)), weights_(std::move(weights)), biases_(std::move(biases)), tap_(std::move(tap)) {
  if (layers_.empty() || layers_.front().kind != LayerSpec::Kind::kConv) {
    throw InvalidParameter("feature extractor must start with a conv layer");
  }
  if (weights_.size() != layers_.size() || biases_.size() != layers_.size()) {
    throw InvalidParameter("feature extractor weights do not match its layers");
  }
  int channels = layers_.front().in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.kind != LayerSpec::Kind::kConv) continue;
    if (l.in != channels || l.k < 1 || l.k % 2 == 0 || weights_[i].rows() != l.out ||
        weights_[i].cols() != l.in * l.k * l.k || biases_[i].size() != l.out) {
      throw InvalidParameter("feature extractor layer '" + l.name + "' is inconsistent");
    }
    channels = l.out;
  }
  if (tap_.empty()) tap_ = layers_.back().name;
  tap_index();
}

int FeatureExtractor::tap_index() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == tap_) return static_cast<int>(i);
  }
  throw InvalidParameter("tap layer '" + tap_ + "' not in the feature extractor");
}

FeatureExtractor FeatureExtractor::random_default(std::uint64_t seed) {
  using K = LayerSpec::Kind;
  std::vector<LayerSpec> layers{{K::kConv, "conv1_1", 3, 8, 3},
                                {K::kRelu, "relu1_1"},
                                {K::kAvgPool, "pool1"},
                                {K::kConv, "conv2_1", 8, 16, 3},
                                {K::kRelu, "relu2_1"}};
  Rng rng(seed);
  std::vector<nn::Matrix> w(layers.size());
  std::vector<nn::Vector> b(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind != K::kConv) continue;
    nn::Conv2d conv(layers[i].name, layers[i].in, layers[i].out, layers[i].k, rng);
    w[i] = conv.weight.value;
    b[i] = nn::Vector::Zero(layers[i].out);
  }
  return FeatureExtractor(layers, w, b, "relu2_1");
}

FeatureExtractor FeatureExtractor::identity() {
  return FeatureExtractor({{LayerSpec::Kind::kConv, "id", 1, 1, 1}}, {nn::Matrix::Ones(1, 1)},
                          {nn::Vector::Zero(1)}, "id");
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path, const std::string& tap) {
  const TensorBundle bundle = TensorBundle::load(path);
  std::istringstream text(bundle.text("layers"));
  std::vector<LayerSpec> layers;
  std::vector<nn::Matrix> w;
  std::vector<nn::Vector> b;
  std::string line;
  while (std::getline(text, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    LayerSpec l;
    ls >> kind >> l.name;
    if (kind == "conv") {
      l.kind = LayerSpec::Kind::kConv;
      if (!(ls >> l.in >> l.out >> l.k) || l.in < 1 || l.out < 1 || l.k < 1) {
        throw LoadError("bad conv layer line: " + line);
      }
      w.push_back(bundle.matrix(l.name + ".weight", l.out, l.in * l.k * l.k));
      b.push_back(bundle.matrix(l.name + ".bias", l.out, 1));
    } else if (kind == "relu" || kind == "avgpool") {
      l.kind = kind == "relu" ? LayerSpec::Kind::kRelu : LayerSpec::Kind::kAvgPool;
      w.emplace_back();
      b.emplace_back();
    } else {
      throw LoadError("unknown layer kind '" + kind + "'");
    }
    if (l.name.empty()) throw LoadError("unnamed layer");
    layers.push_back(l);
  }
  std::string chosen = tap;
  if (chosen.empty() && bundle.contains("tap")) chosen = bundle.text("tap");
  try {
    return FeatureExtractor(std::move(layers), std::move(w), std::move(b), chosen);
  } catch (const InvalidParameter& e) {
    throw LoadError(std::string("invalid feature extractor: ") + e.what());
  }
}

void FeatureExtractor::save(const std::filesystem::path& path) const {
  TensorBundle bundle;
  std::ostringstream text;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    switch (l.kind) {
      case LayerSpec::Kind::kConv:
        text << "conv " << l.name << ' ' << l.in << ' ' << l.out << ' ' << l.k << '\n';
        break;
      case LayerSpec::Kind::kRelu:
        text << "relu " << l.name << '\n';
        break;
      case LayerSpec::Kind::kAvgPool:
        text << "avgpool " << l.name << '\n';
        break;
    }
  }
  bundle.put_text("layers", text.str());
  bundle.put_text("tap", tap_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerSpec::Kind::kConv) continue;
    bundle.put(layers_[i].name + ".weight", weights_[i], DType::kF32);
    bundle.put(layers_[i].name + ".bias", nn::Matrix(biases_[i]), DType::kF32);
  }
  bundle.save(path);
}

nn::Matrix FeatureExtractor::features(const Percept& img) const {
  int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  nn::Matrix x = to_channels(img, input_channels());
  const int last = tap_index();
  for (int i = 0; i <= last; ++i) {
    const auto& l = layers_[i];
    switch (l.kind) {
      case LayerSpec::Kind::kConv:
        x = nn::conv2d(x, h, w, weights_[i], biases_[i], l.k);
        break;
      case LayerSpec::Kind::kRelu:
        x = nn::relu(x);
        break;
      case LayerSpec::Kind::kAvgPool:
        x = nn::avg_pool2(x, h, w);
        h /= 2;
        w /= 2;
        break;
    }
  }
  return x;
}

Percept FeatureExtractor::backward(const Percept& img, const nn::Matrix& dfeat) const {
  const int last = tap_index();
  std::vector<nn::Matrix> inputs;
  std::vector<std::pair<int, int>> dims;
  int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  nn::Matrix x = to_channels(img, input_channels());
  for (int i = 0; i <= last; ++i) {
    inputs.push_back(x);
    dims.emplace_back(h, w);
    const auto& l = layers_[i];
    if (l.kind == LayerSpec::Kind::kConv) {
      x = nn::conv2d(x, h, w, weights_[i], biases_[i], l.k);
    } else if (l.kind == LayerSpec::Kind::kRelu) {
      x = nn::relu(x);
    } else {
      x = nn::avg_pool2(x, h, w);
      h /= 2;
      w /= 2;
    }
  }
  if (dfeat.rows() != x.rows() || dfeat.cols() != x.cols()) throw DimensionError("feature gradient shape mismatch");
  nn::Matrix g = dfeat;
  for (int i = last; i >= 0; --i) {
    const auto [hi, wi] = dims[i];
    const auto& l = layers_[i];
    if (l.kind == LayerSpec::Kind::kConv) {
      g = nn::conv2d_backward_input(g, hi, wi, weights_[i], l.k);
    } else if (l.kind == LayerSpec::Kind::kRelu) {
      g = nn::relu_backward(inputs[i], g);
    } else {
      g = nn::avg_pool2_backward(g, hi, wi);
    }
  }
  Percept out(img.rows(), img.cols());
  Eigen::Map<Eigen::RowVectorXd>(out.data(), out.size()) = g.colwise().sum();
  return out;
}

double feature_loss(const Percept& t, const Percept& t_hat, const FeatureExtractor& fx) {
  check_same_shape(t, t_hat);
  return (fx.features(t) - fx.features(t_hat)).squaredNorm() / static_cast<double>(fx.features(t).size());
}

Percept feature_loss_grad(const Percept& t, const Percept& t_hat, const FeatureExtractor& fx) {
  check_same_shape(t, t_hat);
  const nn::Matrix diff = fx.features(t_hat) - fx.features(t);
  return fx.backward(t_hat, (2.0 / static_cast<double>(diff.size())) * diff);
}

// ---- joint ----------------------------------------------------------------

LossTerms evaluate_loss(const Percept& t, const Percept& t_hat, const LossConfig& cfg,
                        const FeatureExtractor* fx, Percept* grad) {
  check_same_shape(t, t_hat);
  LossTerms terms;
  terms.mae = mae(t, t_hat);
  terms.smooth = laplacian_smooth(t_hat, cfg.laplacian_k, cfg.smooth_mode);
  nn::Matrix diff;
  if (fx) {
    diff = fx->features(t_hat) - fx->features(t);
    terms.feature = diff.squaredNorm() / static_cast<double>(diff.size());
  }
  terms.joint = terms.mae + cfg.weights.alpha * terms.smooth + cfg.weights.beta * terms.feature;
  if (grad) {
    *grad = mae_grad(t, t_hat);
    if (cfg.weights.alpha != 0.0) {
      *grad += cfg.weights.alpha * laplacian_smooth_grad(t_hat, cfg.laplacian_k, cfg.smooth_mode);
    }
    if (fx && cfg.weights.beta != 0.0) {
      *grad += cfg.weights.beta * fx->backward(t_hat, (2.0 / static_cast<double>(diff.size())) * diff);
    }
  }
  return terms;
}

double joint(const Percept& t, const Percept& t_hat, const LossWeights& w, const FeatureExtractor& fx) {
  LossConfig cfg;
  cfg.weights = w;
  return evaluate_loss(t, t_hat, cfg, &fx).joint;
}

// ---- schedule -------------------------------------------------------------

void LossSchedule::validate() const {
  if (phases.empty() || phases.front().start_epoch != 0) {
    throw InvalidParameter("loss schedule must have a phase starting at epoch 0");
  }
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const auto& p = phases[i];
    if (p.alpha < 0 || p.beta < 0) throw InvalidParameter("loss weights must be nonnegative");
    if (i == 0) continue;
    const auto& q = phases[i - 1];
    if (p.start_epoch <= q.start_epoch) throw InvalidParameter("loss phases must start at increasing epochs");
    if (p.beta < q.beta) throw InvalidParameter("beta must be nondecreasing across phases");
    if (p.alpha > q.alpha) throw InvalidParameter("alpha must be nonincreasing across phases");
  }
  if (!(warmup_lr_divisor > 0) || !(post_warmup_lr_factor > 0) || warmup_length < 0) {
    throw InvalidParameter("invalid learning-rate warmup settings");
  }
}

LossSchedule LossSchedule::default_schedule(int epochs_per_phase, double initial_alpha) {
  LossSchedule s;
  s.phases.clear();
  constexpr int kPhases = 8;
  for (int i = 0; i < kPhases; ++i) {
    const double f = static_cast<double>(i) / (kPhases - 1);
    s.phases.push_back({i * epochs_per_phase, initial_alpha * (1.0 - f), kReportingWeights.beta * f});
  }
  s.warmup_length = std::max(1, epochs_per_phase / 5);
  return s;
}

ScheduleStep schedule_step(const LossSchedule& sched, int epoch) {
  if (epoch < 0) throw InvalidParameter("epoch must be nonnegative");
  sched.validate();
  ScheduleStep step;
  double current = 1.0;
  for (std::size_t i = 0; i < sched.phases.size(); ++i) {
    const auto& p = sched.phases[i];
    if (p.start_epoch > epoch) break;
    step.phase = static_cast<int>(i);
    step.weights = {p.alpha, p.beta};
    step.lr_multiplier = current;
    if (i == 0 || p.beta <= sched.phases[i - 1].beta) continue;
    const double before = current;
    current *= sched.post_warmup_lr_factor;
    const bool warming = epoch < p.start_epoch + sched.warmup_length;
    step.lr_multiplier = warming ? before / sched.warmup_lr_divisor : current;
  }
  return step;
}

}  // namespace phosphene
