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

#include "gdrift/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

#include "gdrift/error.h"

namespace gdrift {

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

void CheckDims(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("tensor: zero dimension in shape " +
                       ShapeString(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  CheckDims(shape_);
  data_.assign(ShapeSize(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckDims(shape_);
  if (ShapeSize(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + ShapeString(shape_) + " needs " +
                     std::to_string(ShapeSize(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() <= 1) return 1;
  throw ShapeError("tensor: rows() on rank-" + std::to_string(rank()) +
                   " tensor " + ShapeString(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw ShapeError("tensor: cols() on rank-" + std::to_string(rank()) +
                   " tensor " + ShapeString(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("tensor: item() on tensor of shape " +
                        ShapeString(shape_));
  }
  return data_[0];
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::BitwiseEquals(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(),
                      data_.size() * sizeof(double)) == 0);
}

bool BitwiseEquals(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !ia->second.BitwiseEquals(ib->second)) {
      return false;
    }
  }
  return true;
}

}  // namespace gdrift
