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

#include "phosphene/nn.hpp"

#include <cmath>

namespace phosphene::nn {

void zero_grad(const ParamList& params) {
  for (Param* p : params) p->grad.setZero();
}

double clip_global_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (Param* p : params) p->grad *= s;
  }
  return norm;
}

bool all_finite(const ParamList& params) {
  for (const Param* p : params) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

void put_params(TensorBundle& bundle, const ParamList& params) {
  for (const Param* p : params) bundle.put(p->name, p->value, DType::kF32);
}

void get_params(const TensorBundle& bundle, const ParamList& params) {
  for (Param* p : params) {
    p->value = bundle.matrix(p->name, p->value.rows(), p->value.cols());
    p->grad.setZero();
  }
}

// ---- Dense ----------------------------------------------------------------

Dense::Dense(const std::string& name, int in, int out, Rng& rng, double scale) {
  weight.init(name + ".weight", out, in);
  bias.init(name + ".bias", out, 1, false);
  const double limit = scale * std::sqrt(3.0 / in);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = uniform(rng, -limit, limit);
}

Matrix Dense::forward(const Matrix& x) {
  x_ = x;
  return infer(x);
}

Matrix Dense::infer(const Matrix& x) const {
  if (x.rows() != in()) throw DimensionError(weight.name + ": expected " + std::to_string(in()) + " inputs");
  return (weight.value * x).colwise() + bias.value.col(0);
}

Matrix Dense::backward(const Matrix& dy) {
  weight.grad.noalias() += dy * x_.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

// ---- BatchNorm ------------------------------------------------------------

BatchNorm::BatchNorm(const std::string& name, int n, double momentum, double eps)
    : momentum(momentum), eps(eps), name_(name) {
  gamma.init(name + ".gamma", n, 1, false);
  gamma.value.setOnes();
  beta.init(name + ".beta", n, 1, false);
  running_mean = Vector::Zero(n);
  running_var = Vector::Ones(n);
}

Matrix BatchNorm::forward(const Matrix& x, bool training) {
  if (x.rows() != gamma.value.rows()) throw DimensionError(name_ + ": feature count mismatch");
  Vector mean, var;
  if (training) {
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean();
    running_mean = momentum * running_mean + (1.0 - momentum) * mean;
    running_var = momentum * running_var + (1.0 - momentum) * var;
  } else {
    mean = running_mean;
    var = running_var;
  }
  inv_std_ = (var.array() + eps).rsqrt();
  xhat_ = (x.colwise() - mean).array().colwise() * inv_std_.array();
  return (xhat_.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();
}

Matrix BatchNorm::infer(const Matrix& x) const {
  if (x.rows() != gamma.value.rows()) throw DimensionError(name_ + ": feature count mismatch");
  const Vector inv_std = (running_var.array() + eps).rsqrt();
  const Matrix xhat = (x.colwise() - running_mean).array().colwise() * inv_std.array();
  return (xhat.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();
}

Matrix BatchNorm::backward(const Matrix& dy) {
  // Training-mode backward (batch statistics).
  const double n = static_cast<double>(dy.cols());
  gamma.grad.col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
  beta.grad.col(0) += dy.rowwise().sum();
  const Matrix dxhat = dy.array().colwise() * gamma.value.col(0).array();
  const Vector sum_d = dxhat.rowwise().sum();
  const Vector sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum();
  Matrix dx = (n * dxhat).colwise() - sum_d;
  dx -= (xhat_.array().colwise() * sum_dx.array()).matrix();
  return dx.array().colwise() * (inv_std_.array() / n);
}

void BatchNorm::put(TensorBundle& bundle) const {
  bundle.put(gamma.name, gamma.value, DType::kF32);
  bundle.put(beta.name, beta.value, DType::kF32);
  bundle.put(name_ + ".running_mean", Matrix(running_mean), DType::kF64);
  bundle.put(name_ + ".running_var", Matrix(running_var), DType::kF64);
}

void BatchNorm::get(const TensorBundle& bundle) {
  const auto n = gamma.value.rows();
  gamma.value = bundle.matrix(gamma.name, n, 1);
  beta.value = bundle.matrix(beta.name, n, 1);
  running_mean = bundle.matrix(name_ + ".running_mean", n, 1);
  running_var = bundle.matrix(name_ + ".running_var", n, 1);
}

// ---- activations ----------------------------------------------------------

Matrix leaky_relu(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}

Matrix leaky_relu_backward(const Matrix& x, const Matrix& dy, double slope) {
  return dy.binaryExpr(x, [slope](double g, double v) { return v > 0 ? g : slope * g; });
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  return dy.binaryExpr(x, [](double g, double v) { return v > 0 ? g : 0.0; });
}

// ---- convolution ----------------------------------------------------------

Matrix im2col(const Matrix& x, int h, int w, int k) {
  const int c = static_cast<int>(x.rows());
  const int half = k / 2;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * k + dy) * k + dx;
        for (int r = 0; r < h; ++r) {
          const int rr = r + dy - half;
          if (rr < 0 || rr >= h) continue;
          for (int cc = 0; cc < w; ++cc) {
            const int xc = cc + dx - half;
            if (xc < 0 || xc >= w) continue;
            cols(row, r * w + cc) = x(ch, rr * w + xc);
          }
        }
      }
    }
  }
  return cols;
}

Matrix conv2d(const Matrix& x, int h, int w, const Matrix& weight, const Vector& bias, int k) {
  if (weight.cols() != x.rows() * k * k) throw DimensionError("conv2d: channel mismatch");
  return (weight * im2col(x, h, w, k)).colwise() + bias;
}

Matrix conv2d_backward_input(const Matrix& dy, int h, int w, const Matrix& weight, int k) {
  const int c = static_cast<int>(weight.cols() / (k * k));
  const int half = k / 2;
  const Matrix dcols = weight.transpose() * dy;
  Matrix dx = Matrix::Zero(c, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    for (int dyo = 0; dyo < k; ++dyo) {
      for (int dxo = 0; dxo < k; ++dxo) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * k + dyo) * k + dxo;
        for (int r = 0; r < h; ++r) {
          const int rr = r + dyo - half;
          if (rr < 0 || rr >= h) continue;
          for (int cc = 0; cc < w; ++cc) {
            const int xc = cc + dxo - half;
            if (xc < 0 || xc >= w) continue;
            dx(ch, rr * w + xc) += dcols(row, r * w + cc);
          }
        }
      }
    }
  }
  return dx;
}

Matrix avg_pool2(const Matrix& x, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  Matrix y(x.rows(), static_cast<Eigen::Index>(ho) * wo);
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      const int i00 = 2 * r * w + 2 * c;
      y.col(r * wo + c) = 0.25 * (x.col(i00) + x.col(i00 + 1) + x.col(i00 + w) + x.col(i00 + w + 1));
    }
  }
  return y;
}

Matrix avg_pool2_backward(const Matrix& dy, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  Matrix dx = Matrix::Zero(dy.rows(), static_cast<Eigen::Index>(h) * w);
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      const int i00 = 2 * r * w + 2 * c;
      const auto g = 0.25 * dy.col(r * wo + c);
      dx.col(i00) += g;
      dx.col(i00 + 1) += g;
      dx.col(i00 + w) += g;
      dx.col(i00 + w + 1) += g;
    }
  }
  return dx;
}

Conv2d::Conv2d(const std::string& name, int in, int out, int k, Rng& rng) : k(k) {
  if (k < 1 || k % 2 == 0) throw InvalidParameter("conv kernel size must be odd");
  weight.init(name + ".weight", out, in * k * k);
  bias.init(name + ".bias", out, 1, false);
  // He-normal for ReLU stacks.
  const double sd = std::sqrt(2.0 / (in * k * k));
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = sd * normal01(rng);
}

Matrix Conv2d::forward(const Matrix& x, int h, int w) {
  if (weight.value.cols() != x.rows() * k * k) throw DimensionError(weight.name + ": channel mismatch");
  h_ = h;
  w_ = w;
  cols_ = im2col(x, h, w, k);
  return (weight.value * cols_).colwise() + bias.value.col(0);
}

Matrix Conv2d::infer(const Matrix& x, int h, int w) const {
  return conv2d(x, h, w, weight.value, bias.value.col(0), k);
}

Matrix Conv2d::backward(const Matrix& dy) {
  weight.grad.noalias() += dy * cols_.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return conv2d_backward_input(dy, h_, w_, weight.value, k);
}

// ---- optimizers -----------------------------------------------------------

void SgdNesterov::step(const ParamList& params) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const Param* p : params) velocity_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Matrix& v = velocity_[i];
    v = momentum * v - lr * p.grad;
    p.value += momentum * v - lr * p.grad;
  }
}

void AdamW::step(const ParamList& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Param* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m_[i] = beta1 * m_[i] + (1 - beta1) * p.grad;
    v_[i] = beta2 * v_[i] + (1 - beta2) * p.grad.cwiseAbs2();
    if (p.decay) p.value *= 1.0 - lr * weight_decay;
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace phosphene::nn
