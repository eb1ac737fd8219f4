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

#include "phosphene/tensor_io.hpp"

#include <fstream>
#include <numeric>

#include "binary_io.hpp"

namespace phosphene {
namespace {

constexpr std::uint32_t kVersion = 1;

void write_f64(std::ostream& os, double v) {
  v = detail::byteswap_if_needed(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

double read_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw LoadError("truncated tensor payload");
  return detail::byteswap_if_needed(v);
}

}  // namespace

std::size_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

void TensorBundle::put(const std::string& name, const Eigen::MatrixXd& m, DType dtype) {
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values[r * m.cols() + c] = m(r, c);
  }
  put(name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, values, dtype);
}

void TensorBundle::put(const std::string& name, const std::vector<std::uint32_t>& shape,
                       const std::vector<double>& values, DType dtype) {
  if (dtype == DType::kU8) throw InvalidParameter("use put_text for u8 tensors");
  Tensor t{shape, dtype, values, {}};
  if (t.numel() != values.size()) throw DimensionError("tensor '" + name + "' shape/value mismatch");
  if (!contains(name)) order_.push_back(name);
  tensors_[name] = std::move(t);
}

void TensorBundle::put_text(const std::string& name, const std::string& text) {
  Tensor t{{static_cast<std::uint32_t>(text.size())}, DType::kU8, {}, text};
  if (!contains(name)) order_.push_back(name);
  tensors_[name] = std::move(t);
}

const Tensor& TensorBundle::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("missing tensor '" + name + "'");
  return it->second;
}

Eigen::MatrixXd TensorBundle::matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
  const Tensor& t = at(name);
  if (t.dtype == DType::kU8) throw LoadError("tensor '" + name + "' is not numeric");
  if (t.numel() != static_cast<std::size_t>(rows * cols)) {
    throw LoadError("tensor '" + name + "' has unexpected shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.values[r * cols + c];
  }
  return m;
}

std::string TensorBundle::text(const std::string& name) const {
  const Tensor& t = at(name);
  if (t.dtype != DType::kU8) throw LoadError("tensor '" + name + "' is not text");
  return t.text;
}

std::vector<std::string> TensorBundle::names() const { return order_; }

void TensorBundle::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("PTNS", 4);
  detail::write_u32(os, kVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const Tensor& t = tensors_.at(name);
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.dtype));
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::write_u32(os, d);
  }
  for (const auto& name : order_) {
    const Tensor& t = tensors_.at(name);
    switch (t.dtype) {
      case DType::kF32:
        for (double v : t.values) detail::write_f32(os, static_cast<float>(v));
        break;
      case DType::kF64:
        for (double v : t.values) write_f64(os, v);
        break;
      case DType::kU8:
        os.write(t.text.data(), static_cast<std::streamsize>(t.text.size()));
        break;
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

TensorBundle TensorBundle::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open tensor file " + path.string());
  detail::expect_magic(is, "PTNS", "tensor file");
  if (detail::read_u32(is, "tensor header") != kVersion) throw LoadError("unsupported tensor file version");
  const auto count = detail::read_u32(is, "tensor header");
  if (count > (1u << 20)) throw LoadError("corrupt tensor table");
  TensorBundle b;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_u32(is, "tensor table");
    if (len > 4096) throw LoadError("corrupt tensor name");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw LoadError("truncated tensor table");
    Tensor t;
    const auto dtype = detail::read_u32(is, "tensor table");
    if (dtype > 2) throw LoadError("unknown dtype for tensor '" + name + "'");
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = detail::read_u32(is, "tensor table");
    if (ndim > 8) throw LoadError("corrupt tensor rank");
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(detail::read_u32(is, "tensor table"));
    if (b.contains(name)) throw LoadError("duplicate tensor '" + name + "'");
    b.order_.push_back(name);
    b.tensors_[name] = std::move(t);
  }
  for (const auto& name : b.order_) {
    Tensor& t = b.tensors_[name];
    const std::size_t n = t.numel();
    if (n > (std::size_t{1} << 31)) throw LoadError("tensor '" + name + "' too large");
    if (t.dtype == DType::kU8) {
      t.text.resize(n);
      if (!is.read(t.text.data(), static_cast<std::streamsize>(n))) throw LoadError("truncated tensor payload");
    } else {
      t.values.resize(n);
      for (auto& v : t.values) {
        v = t.dtype == DType::kF32 ? detail::read_f32(is, "tensor payload") : read_f64(is);
      }
    }
  }
  return b;
}

}  // namespace phosphene
