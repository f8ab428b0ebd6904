// Copyright 2026 The gdrift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GDRIFT_TENSOR_H_
#define GDRIFT_TENSOR_H_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gdrift {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major tensor of doubles. A rank-0 tensor holds one value.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor of the given shape. Every dimension must be positive.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Row/column view for rank-1 and rank-2 tensors. A rank-1 tensor is a
  // single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  double item() const;
  bool AllFinite() const;

  // Bitwise equality of shape and data (distinguishes -0.0 from 0.0).
  bool BitwiseEquals(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Named tensors, ordered by name. Used both for model parameters and for the
// gradients that mirror them.
using TensorMap = std::map<std::string, Tensor>;
using GradientSet = TensorMap;

bool BitwiseEquals(const TensorMap& a, const TensorMap& b);

}  // namespace gdrift

#endif  // GDRIFT_TENSOR_H_
