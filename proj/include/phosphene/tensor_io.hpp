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

// Named tensor container used for every set of learned or loaded weights.
//
// Layout (little-endian):
//   char[4] "PTNS", u32 version (1), u32 tensor count,
//   layer table, one entry per tensor:
//     u32 name length, name bytes, u32 dtype, u32 ndim, u32 dims[ndim]
//   payload: each tensor's elements in table order, row-major.
// dtype: 0 = f32, 1 = u8 (metadata strings), 2 = f64.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "phosphene/common.hpp"

namespace phosphene {

enum class DType : std::uint32_t { kF32 = 0, kU8 = 1, kF64 = 2 };

struct Tensor {
  std::vector<std::uint32_t> shape;
  DType dtype = DType::kF64;
  std::vector<double> values;  // numeric tensors, any float dtype
  std::string text;            // u8 tensors

  std::size_t numel() const;
};

class TensorBundle {
 public:
  // Stores a matrix row-major with shape {rows, cols}.
  void put(const std::string& name, const Eigen::MatrixXd& m, DType dtype = DType::kF64);
  void put(const std::string& name, const std::vector<std::uint32_t>& shape,
           const std::vector<double>& values, DType dtype = DType::kF64);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  // Reads a 2-D (or 1-D as a column) tensor, checking the expected shape.
  Eigen::MatrixXd matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const;
  std::string text(const std::string& name) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  static TensorBundle load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> tensors_;
  std::vector<std::string> order_;
};

}  // namespace phosphene
