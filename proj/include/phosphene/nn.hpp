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

// Minimal neural-network building blocks on Eigen matrices.
//
// Fully connected activations are (features x batch), one column per sample.
// Convolutional activations of one image are (channels x H*W) with row-major
// pixel order.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "phosphene/common.hpp"
#include "phosphene/tensor_io.hpp"

namespace phosphene::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // subject to decoupled weight decay

  void init(std::string n, Eigen::Index rows, Eigen::Index cols, bool d = true) {
    name = std::move(n);
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
    decay = d;
  }
};

using ParamList = std::vector<Param*>;

void zero_grad(const ParamList& params);
// Rescales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_global_norm(const ParamList& params, double max_norm);
bool all_finite(const ParamList& params);

void put_params(TensorBundle& bundle, const ParamList& params);
void get_params(const TensorBundle& bundle, const ParamList& params);

// y = W x + b. Weights are drawn uniformly in +-scale * sqrt(3 / fan_in)
// (unit-variance fan-in scaling when scale = 1).
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out, Rng& rng, double scale = 1.0);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  Matrix forward(const Matrix& x);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&weight, &bias}; }

  Param weight;
  Param bias;

 private:
  Matrix x_;
};

// Per-feature batch normalization. Running statistics follow
//   running = momentum * running + (1 - momentum) * batch
// and inference normalizes with them.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, int n, double momentum = 0.99, double eps = 1e-3);

  Matrix forward(const Matrix& x, bool training);
  // Inference with running statistics; no state is touched.
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&gamma, &beta}; }
  void put(TensorBundle& bundle) const;
  void get(const TensorBundle& bundle);

  Param gamma;
  Param beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.99;
  double eps = 1e-3;

 private:
  std::string name_;
  Matrix xhat_;
  Vector inv_std_;
};

Matrix leaky_relu(const Matrix& x, double slope = 0.3);
Matrix leaky_relu_backward(const Matrix& x, const Matrix& dy, double slope = 0.3);
Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& dy);

// Same-padded (zero) stride-1 convolution. `weight` is out x (in * k * k)
// with column index (c * k + dy) * k + dx.
Matrix im2col(const Matrix& x, int h, int w, int k);
Matrix conv2d(const Matrix& x, int h, int w, const Matrix& weight, const Vector& bias, int k);
// Gradient with respect to the input given dL/dy.
Matrix conv2d_backward_input(const Matrix& dy, int h, int w, const Matrix& weight, int k);

// 2x2 average pooling, stride 2; odd trailing rows/columns are dropped.
Matrix avg_pool2(const Matrix& x, int h, int w);
Matrix avg_pool2_backward(const Matrix& dy, int h, int w);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int k, Rng& rng);

  Matrix forward(const Matrix& x, int h, int w);
  Matrix infer(const Matrix& x, int h, int w) const;
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&weight, &bias}; }

  int k = 3;
  Param weight;
  Param bias;

 private:
  Matrix cols_;
  int h_ = 0, w_ = 0;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const ParamList& params) = 0;
  double lr = 0.01;
};

// SGD with Nesterov momentum:
//   v = mu * v - lr * g;   w += mu * v - lr * g
class SgdNesterov final : public Optimizer {
 public:
  SgdNesterov(double lr, double momentum) : momentum(momentum) { this->lr = lr; }
  void step(const ParamList& params) override;
  double momentum;

 private:
  std::vector<Matrix> velocity_;
};

// Adam with decoupled weight decay.
class AdamW final : public Optimizer {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : weight_decay(weight_decay), beta1(beta1), beta2(beta2), eps(eps) {
    this->lr = lr;
  }
  void step(const ParamList& params) override;
  double weight_decay, beta1, beta2, eps;

 private:
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace phosphene::nn
