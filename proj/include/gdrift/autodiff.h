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

#ifndef GDRIFT_AUTODIFF_H_
#define GDRIFT_AUTODIFF_H_

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph is a dynamic tape: every primitive appends a node holding its
// output value, and Backward() walks the tape in reverse. Nodes are only ever
// appended, so insertion order is a topological order. Broadcasting is limited
// to AddBias (a vector added to every row); every other shape mismatch throws
// ShapeError. Every primitive checks its output for NaN/Inf and throws
// NumericError.
//
// A Graph must not be shared between threads while it is being built or
// differentiated. Independent graphs are fully independent.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdrift/tensor.h"

namespace gdrift::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kMatMul,
  kAdd,
  kAddBias,
  kMul,
  kScale,
  kEmbedding,
  kLayerNorm,
  kSoftmax,
  kCausalSoftmax,
  kLogSoftmax,
  kGelu,
  kRelu,
  kTranspose,
  kSliceRows,
  kSliceCols,
  kConcatCols,
  kRow,
  kReshape,
  kCrossEntropy,
  kSum,
  kDot,
};

std::string_view OpName(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf holding a copy of `value`; never receives a gradient.
  Var Constant(Tensor value);
  // Leaf referring to caller-owned storage. `value` must outlive the graph
  // and must not be modified while the graph is in use.
  Var Parameter(const std::string& name, const Tensor& value);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  const Tensor& value(std::size_t id) const;

  // Gradient of the scalar `loss` with respect to every tensor in `params`.
  // Names in `params` never registered through Parameter() receive zeros.
  GradientSet Backward(Var loss, const TensorMap& params);

  // Raw gradient with respect to every node, indexed by node id. Nodes not on
  // a path to `loss` hold empty tensors.
  std::vector<Tensor> BackwardAll(Var loss);

 private:
  friend Var MatMul(Var, Var);
  friend Var Add(Var, Var);
  friend Var AddBias(Var, Var);
  friend Var Mul(Var, Var);
  friend Var Scale(Var, double);
  friend Var Embedding(Var, std::span<const int>);
  friend Var LayerNorm(Var, Var, Var, double);
  friend Var Softmax(Var);
  friend Var CausalSoftmax(Var);
  friend Var LogSoftmax(Var);
  friend Var Gelu(Var);
  friend Var Relu(Var);
  friend Var Transpose(Var);
  friend Var SliceRows(Var, std::size_t, std::size_t);
  friend Var SliceCols(Var, std::size_t, std::size_t);
  friend Var ConcatCols(std::span<const Var>);
  friend Var Row(Var, std::size_t);
  friend Var Reshape(Var, Shape);
  friend Var CrossEntropy(Var, int);
  friend Var Sum(Var);
  friend Var Dot(Var, Var);

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    std::string param_name;
    // Per-primitive saved state for the backward rule.
    std::vector<int> ints;
    std::vector<double> saved;
    double scalar = 0.0;
  };

  Var Push(Node node);
  void BackwardNode(std::size_t id, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// Matrix product of [m,k] and [k,n].
Var MatMul(Var a, Var b);
// Elementwise sum of equal shapes.
Var Add(Var a, Var b);
// [m,n] + [n]: the vector is added to every row.
Var AddBias(Var a, Var bias);
// Elementwise product of equal shapes.
Var Mul(Var a, Var b);
Var Scale(Var a, double factor);
// Gathers rows of a [V,d] table; returns [ids.size(), d].
Var Embedding(Var table, std::span<const int> ids);
// Per-row layer normalization of [m,n] with [n] scale and shift.
Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Softmax over the last dimension of a rank-1 or rank-2 tensor.
Var Softmax(Var x);
// Row softmax of a square [m,m] score matrix restricted to columns j <= i.
// Masked entries are exactly zero.
Var CausalSoftmax(Var x);
Var LogSoftmax(Var x);
// tanh approximation of GELU.
Var Gelu(Var x);
Var Relu(Var x);
Var Transpose(Var x);
Var SliceRows(Var x, std::size_t start, std::size_t count);
Var SliceCols(Var x, std::size_t start, std::size_t count);
Var ConcatCols(std::span<const Var> parts);
// Row `index` of a rank-2 tensor, as a rank-1 tensor.
Var Row(Var x, std::size_t index);
Var Reshape(Var x, Shape shape);
// -log softmax(logits)[target] for rank-1 logits. Throws IndexError when
// target is outside [0, V).
Var CrossEntropy(Var logits, int target);
Var Sum(Var x);
// Inner product of two rank-1 tensors of equal length.
Var Dot(Var a, Var b);

}  // namespace gdrift::ad

#endif  // GDRIFT_AUTODIFF_H_
