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

#include "gdrift/autodiff.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "gdrift/error.h"

namespace gdrift::ad {
namespace {

constexpr double kGeluCoeff = 0.044715;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);

[[noreturn]] void ThrowShape(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(OpName(kind)) + ": " + detail);
}

void RequireSameGraph(OpKind kind, Var a, Var b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) {
    throw ContractError(std::string(OpName(kind)) +
                        ": operands belong to different graphs");
  }
}

void RequireRank(OpKind kind, const Tensor& t, std::size_t rank,
                 const char* operand) {
  if (t.rank() != rank) {
    ThrowShape(kind, std::string(operand) + " must be rank " +
                         std::to_string(rank) + ", got " +
                         ShapeString(t.shape()));
  }
}

void RequireRowLike(OpKind kind, const Tensor& t) {
  if (t.rank() != 1 && t.rank() != 2) {
    ThrowShape(kind, "expected rank 1 or 2, got " + ShapeString(t.shape()));
  }
}

Tensor& Accumulator(std::vector<Tensor>& grads, std::size_t id,
                    const Shape& shape) {
  Tensor& g = grads[id];
  if (g.empty()) g = Tensor(shape);
  return g;
}

double LogSumExp(const double* row, std::size_t n) {
  double m = row[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - m);
  return m + std::log(s);
}

}  // namespace

std::string_view OpName(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kCausalSoftmax: return "causal_softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kGelu: return "gelu";
    case OpKind::kRelu: return "relu";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kRow: return "row";
    case OpKind::kReshape: return "reshape";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kSum: return "sum";
    case OpKind::kDot: return "dot";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw ContractError("var: detached handle");
  return graph_->value(id_);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.external != nullptr ? *node.external : node.value;
}

Var Graph::Push(Node node) {
  const Tensor& out = node.external != nullptr ? *node.external : node.value;
  if (!out.AllFinite()) {
    throw NumericError(std::string(OpName(node.kind)) +
                       ": non-finite value in output of shape " +
                       ShapeString(out.shape()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::Constant(Tensor value) {
  Node node{.kind = OpKind::kConstant, .value = std::move(value)};
  return Push(std::move(node));
}

Var Graph::Parameter(const std::string& name, const Tensor& value) {
  Node node{.kind = OpKind::kParameter, .external = &value,
            .param_name = name};
  return Push(std::move(node));
}

Var MatMul(Var a, Var b) {
  RequireSameGraph(OpKind::kMatMul, a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RequireRank(OpKind::kMatMul, x, 2, "lhs");
  RequireRank(OpKind::kMatMul, y, 2, "rhs");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
  if (y.shape()[0] != k) {
    ThrowShape(OpKind::kMatMul, "inner dimensions differ: " +
                                    ShapeString(x.shape()) + " x " +
                                    ShapeString(y.shape()));
  }
  Tensor out(Shape{m, n});
  const double* xd = x.data().data();
  const double* yd = y.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = od + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xd[i * k + p];
      const double* yrow = yd + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return a.graph()->Push({.kind = OpKind::kMatMul,
                          .inputs = {a.id(), b.id()},
                          .value = std::move(out)});
}

Var Add(Var a, Var b) {
  RequireSameGraph(OpKind::kAdd, a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    ThrowShape(OpKind::kAdd, "shapes differ: " + ShapeString(x.shape()) +
                                 " vs " + ShapeString(y.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return a.graph()->Push(
      {.kind = OpKind::kAdd, .inputs = {a.id(), b.id()},
       .value = std::move(out)});
}

Var AddBias(Var a, Var bias) {
  RequireSameGraph(OpKind::kAddBias, a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  RequireRank(OpKind::kAddBias, x, 2, "input");
  RequireRank(OpKind::kAddBias, b, 1, "bias");
  if (b.shape()[0] != x.shape()[1]) {
    ThrowShape(OpKind::kAddBias, "bias " + ShapeString(b.shape()) +
                                     " does not match columns of " +
                                     ShapeString(x.shape()));
  }
  Tensor out = x;
  const std::size_t n = x.shape()[1];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return a.graph()->Push({.kind = OpKind::kAddBias,
                          .inputs = {a.id(), bias.id()},
                          .value = std::move(out)});
}

Var Mul(Var a, Var b) {
  RequireSameGraph(OpKind::kMul, a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    ThrowShape(OpKind::kMul, "shapes differ: " + ShapeString(x.shape()) +
                                 " vs " + ShapeString(y.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.graph()->Push(
      {.kind = OpKind::kMul, .inputs = {a.id(), b.id()},
       .value = std::move(out)});
}

Var Scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.graph()->Push({.kind = OpKind::kScale,
                          .inputs = {a.id()},
                          .value = std::move(out),
                          .scalar = factor});
}

Var Embedding(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  RequireRank(OpKind::kEmbedding, t, 2, "table");
  if (ids.empty()) ThrowShape(OpKind::kEmbedding, "empty id list");
  const std::size_t vocab = t.shape()[0], d = t.shape()[1];
  Tensor out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) +
                       " outside table of " + std::to_string(vocab) +
                       " rows");
    }
    std::copy_n(t.data().begin() + ids[i] * d, d,
                out.data().begin() + i * d);
  }
  return table.graph()->Push({.kind = OpKind::kEmbedding,
                              .inputs = {table.id()},
                              .value = std::move(out),
                              .ints = std::vector<int>(ids.begin(),
                                                       ids.end())});
}

Var LayerNorm(Var x, Var gamma, Var beta, double eps) {
  RequireSameGraph(OpKind::kLayerNorm, x, gamma);
  RequireSameGraph(OpKind::kLayerNorm, x, beta);
  const Tensor& in = x.value();
  const Tensor& g = gamma.value();
  const Tensor& b = beta.value();
  RequireRank(OpKind::kLayerNorm, in, 2, "input");
  RequireRank(OpKind::kLayerNorm, g, 1, "gamma");
  RequireRank(OpKind::kLayerNorm, b, 1, "beta");
  const std::size_t m = in.shape()[0], n = in.shape()[1];
  if (g.shape()[0] != n || b.shape()[0] != n) {
    ThrowShape(OpKind::kLayerNorm,
               "gamma " + ShapeString(g.shape()) + " / beta " +
                   ShapeString(b.shape()) + " do not match " +
                   ShapeString(in.shape()));
  }
  Tensor out(Shape{m, n});
  // saved = [xhat (m*n) | rstd (m)]
  std::vector<double> saved(m * n + m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    saved[m * n + i] = rstd;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (row[j] - mean) * rstd;
      saved[i * n + j] = xhat;
      out[i * n + j] = xhat * g[j] + b[j];
    }
  }
  return x.graph()->Push({.kind = OpKind::kLayerNorm,
                          .inputs = {x.id(), gamma.id(), beta.id()},
                          .value = std::move(out),
                          .saved = std::move(saved),
                          .scalar = eps});
}

Var Softmax(Var x) {
  const Tensor& in = x.value();
  RequireRowLike(OpKind::kSoftmax, in);
  Tensor out = in;
  const std::size_t m = in.rows(), n = in.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data().data() + i * n;
    const double lse = LogSumExp(row, n);
    for (std::size_t j = 0; j < n; ++j) row[j] = std::exp(row[j] - lse);
  }
  return x.graph()->Push(
      {.kind = OpKind::kSoftmax, .inputs = {x.id()}, .value = std::move(out)});
}

Var CausalSoftmax(Var x) {
  const Tensor& in = x.value();
  RequireRank(OpKind::kCausalSoftmax, in, 2, "scores");
  const std::size_t m = in.shape()[0];
  if (in.shape()[1] != m) {
    ThrowShape(OpKind::kCausalSoftmax,
               "scores must be square, got " + ShapeString(in.shape()));
  }
  Tensor out(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data().data() + i * m;
    const double lse = LogSumExp(row, i + 1);
    for (std::size_t j = 0; j <= i; ++j) out[i * m + j] = std::exp(row[j] - lse);
  }
  return x.graph()->Push({.kind = OpKind::kCausalSoftmax,
                          .inputs = {x.id()},
                          .value = std::move(out)});
}

Var LogSoftmax(Var x) {
  const Tensor& in = x.value();
  RequireRowLike(OpKind::kLogSoftmax, in);
  Tensor out = in;
  const std::size_t m = in.rows(), n = in.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data().data() + i * n;
    const double lse = LogSumExp(row, n);
    for (std::size_t j = 0; j < n; ++j) row[j] -= lse;
  }
  return x.graph()->Push({.kind = OpKind::kLogSoftmax,
                          .inputs = {x.id()},
                          .value = std::move(out)});
}

Var Gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    const double u = kGeluScale * (v + kGeluCoeff * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return x.graph()->Push(
      {.kind = OpKind::kGelu, .inputs = {x.id()}, .value = std::move(out)});
}

Var Relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.graph()->Push(
      {.kind = OpKind::kRelu, .inputs = {x.id()}, .value = std::move(out)});
}

Var Transpose(Var x) {
  const Tensor& in = x.value();
  RequireRank(OpKind::kTranspose, in, 2, "input");
  const std::size_t m = in.shape()[0], n = in.shape()[1];
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  }
  return x.graph()->Push({.kind = OpKind::kTranspose,
                          .inputs = {x.id()},
                          .value = std::move(out)});
}

Var SliceRows(Var x, std::size_t start, std::size_t count) {
  const Tensor& in = x.value();
  RequireRank(OpKind::kSliceRows, in, 2, "input");
  if (count == 0 || start + count > in.shape()[0]) {
    ThrowShape(OpKind::kSliceRows,
               "rows [" + std::to_string(start) + ", " +
                   std::to_string(start + count) + ") outside " +
                   ShapeString(in.shape()));
  }
  const std::size_t n = in.shape()[1];
  Tensor out(Shape{count, n},
             std::vector<double>(in.data().begin() + start * n,
                                 in.data().begin() + (start + count) * n));
  return x.graph()->Push({.kind = OpKind::kSliceRows,
                          .inputs = {x.id()},
                          .value = std::move(out),
                          .ints = {static_cast<int>(start)}});
}

Var SliceCols(Var x, std::size_t start, std::size_t count) {
  const Tensor& in = x.value();
  RequireRank(OpKind::kSliceCols, in, 2, "input");
  const std::size_t m = in.shape()[0], n = in.shape()[1];
  if (count == 0 || start + count > n) {
    ThrowShape(OpKind::kSliceCols,
               "columns [" + std::to_string(start) + ", " +
                   std::to_string(start + count) + ") outside " +
                   ShapeString(in.shape()));
  }
  Tensor out(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(in.data().begin() + i * n + start, count,
                out.data().begin() + i * count);
  }
  return x.graph()->Push({.kind = OpKind::kSliceCols,
                          .inputs = {x.id()},
                          .value = std::move(out),
                          .ints = {static_cast<int>(start)}});
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) ThrowShape(OpKind::kConcatCols, "no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> inputs;
  std::vector<int> widths;
  for (const Var& p : parts) {
    RequireSameGraph(OpKind::kConcatCols, parts[0], p);
    RequireRank(OpKind::kConcatCols, p.value(), 2, "part");
    if (p.value().shape()[0] != m) {
      ThrowShape(OpKind::kConcatCols,
                 "row counts differ: " + ShapeString(parts[0].shape()) +
                     " vs " + ShapeString(p.shape()));
    }
    total += p.value().shape()[1];
    inputs.push_back(p.id());
    widths.push_back(static_cast<int>(p.value().shape()[1]));
  }
  Tensor out(Shape{m, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = v.shape()[1];
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.data().begin() + i * w, w,
                  out.data().begin() + i * total + offset);
    }
    offset += w;
  }
  return parts[0].graph()->Push({.kind = OpKind::kConcatCols,
                                 .inputs = std::move(inputs),
                                 .value = std::move(out),
                                 .ints = std::move(widths)});
}

Var Row(Var x, std::size_t index) {
  const Tensor& in = x.value();
  RequireRank(OpKind::kRow, in, 2, "input");
  if (index >= in.shape()[0]) {
    ThrowShape(OpKind::kRow, "row " + std::to_string(index) + " outside " +
                                 ShapeString(in.shape()));
  }
  const std::size_t n = in.shape()[1];
  Tensor out(Shape{n}, std::vector<double>(in.data().begin() + index * n,
                                           in.data().begin() + (index + 1) * n));
  return x.graph()->Push({.kind = OpKind::kRow,
                          .inputs = {x.id()},
                          .value = std::move(out),
                          .ints = {static_cast<int>(index)}});
}

Var Reshape(Var x, Shape shape) {
  const Tensor& in = x.value();
  if (ShapeSize(shape) != in.size()) {
    ThrowShape(OpKind::kReshape, "cannot view " + ShapeString(in.shape()) +
                                     " as " + ShapeString(shape));
  }
  Tensor out(std::move(shape), in.values());
  return x.graph()->Push({.kind = OpKind::kReshape,
                          .inputs = {x.id()},
                          .value = std::move(out)});
}

Var CrossEntropy(Var logits, int target) {
  const Tensor& z = logits.value();
  RequireRank(OpKind::kCrossEntropy, z, 1, "logits");
  const std::size_t v = z.shape()[0];
  if (target < 0 || static_cast<std::size_t>(target) >= v) {
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " outside vocabulary of " + std::to_string(v));
  }
  const double lse = LogSumExp(z.data().data(), v);
  std::vector<double> probs(v);
  for (std::size_t j = 0; j < v; ++j) probs[j] = std::exp(z[j] - lse);
  // (max - z[target]) + log1p(sum over non-argmax of e^(z - max)) keeps full
  // relative precision when the target dominates and the loss is tiny.
  std::size_t arg = 0;
  for (std::size_t j = 1; j < v; ++j) {
    if (z[j] > z[arg]) arg = j;
  }
  double rest = 0.0;
  for (std::size_t j = 0; j < v; ++j) {
    if (j != arg) rest += std::exp(z[j] - z[arg]);
  }
  const double loss = (z[arg] - z[target]) + std::log1p(rest);
  return logits.graph()->Push({.kind = OpKind::kCrossEntropy,
                               .inputs = {logits.id()},
                               .value = Tensor::Scalar(loss),
                               .ints = {target},
                               .saved = std::move(probs)});
}

Var Sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.graph()->Push({.kind = OpKind::kSum,
                          .inputs = {x.id()},
                          .value = Tensor::Scalar(s)});
}

Var Dot(Var a, Var b) {
  RequireSameGraph(OpKind::kDot, a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RequireRank(OpKind::kDot, x, 1, "lhs");
  RequireRank(OpKind::kDot, y, 1, "rhs");
  if (x.shape() != y.shape()) {
    ThrowShape(OpKind::kDot, "lengths differ: " + ShapeString(x.shape()) +
                                 " vs " + ShapeString(y.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return a.graph()->Push({.kind = OpKind::kDot,
                          .inputs = {a.id(), b.id()},
                          .value = Tensor::Scalar(s)});
}

void Graph::BackwardNode(std::size_t id, std::vector<Tensor>& grads) const {
  const Node& node = nodes_[id];
  const Tensor& g = grads[id];
  auto in_value = [&](std::size_t k) -> const Tensor& {
    return value(node.inputs[k]);
  };
  auto acc = [&](std::size_t k) -> Tensor& {
    const std::size_t input = node.inputs[k];
    return Accumulator(grads, input, value(input).shape());
  };
  auto wants = [&](std::size_t k) {
    return nodes_[node.inputs[k]].kind != OpKind::kConstant;
  };

  switch (node.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;
    case OpKind::kMatMul: {
      const Tensor& x = in_value(0);
      const Tensor& y = in_value(1);
      const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
      if (wants(0)) {
        Tensor& dx = acc(0);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data().data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* yrow = y.data().data() + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * yrow[j];
            dx[i * k + p] += s;
          }
        }
      }
      if (wants(1)) {
        Tensor& dy = acc(1);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data().data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            double* dyrow = dy.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dyrow[j] += xv * grow[j];
          }
        }
      }
      return;
    }
    case OpKind::kAdd:
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& d = acc(k);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      return;
    case OpKind::kAddBias: {
      const std::size_t n = g.cols();
      if (wants(0)) {
        Tensor& d = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (wants(1)) {
        Tensor& db = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
      }
      return;
    }
    case OpKind::kMul: {
      const Tensor& x = in_value(0);
      const Tensor& y = in_value(1);
      if (wants(0)) {
        Tensor& d = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
      }
      if (wants(1)) {
        Tensor& d = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * x[i];
      }
      return;
    }
    case OpKind::kScale: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += node.scalar * g[i];
      return;
    }
    case OpKind::kEmbedding: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const std::size_t dim = g.cols();
      for (std::size_t i = 0; i < node.ints.size(); ++i) {
        double* drow = d.data().data() + node.ints[i] * dim;
        const double* grow = g.data().data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) drow[j] += grow[j];
      }
      return;
    }
    case OpKind::kLayerNorm: {
      const Tensor& gamma = in_value(1);
      const std::size_t m = g.shape()[0], n = g.shape()[1];
      const double* xhat = node.saved.data();
      const double* rstd = node.saved.data() + m * n;
      if (wants(1)) {
        Tensor& dg = acc(1);
        for (std::size_t i = 0; i < m * n; ++i) dg[i % n] += g[i] * xhat[i];
      }
      if (wants(2)) {
        Tensor& db = acc(2);
        for (std::size_t i = 0; i < m * n; ++i) db[i % n] += g[i];
      }
      if (wants(0)) {
        Tensor& dx = acc(0);
        std::vector<double> gg(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_gg = 0.0, mean_ggx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            gg[j] = g[i * n + j] * gamma[j];
            mean_gg += gg[j];
            mean_ggx += gg[j] * xhat[i * n + j];
          }
          mean_gg /= static_cast<double>(n);
          mean_ggx /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            dx[i * n + j] +=
                rstd[i] * (gg[j] - mean_gg - xhat[i * n + j] * mean_ggx);
          }
        }
      }
      return;
    }
    case OpKind::kSoftmax:
    case OpKind::kCausalSoftmax: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& d = acc(0);
      const std::size_t m = y.rows(), n = y.cols();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          d[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
      }
      return;
    }
    case OpKind::kLogSoftmax: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& d = acc(0);
      const std::size_t m = y.rows(), n = y.cols();
      for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += g[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          d[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * total;
        }
      }
      return;
    }
    case OpKind::kGelu: {
      if (!wants(0)) return;
      const Tensor& x = in_value(0);
      Tensor& d = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x[i];
        const double u = kGeluScale * (v + kGeluCoeff * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluScale * (1.0 + 3.0 * kGeluCoeff * v * v);
        d[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
      return;
    }
    case OpKind::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = in_value(0);
      Tensor& d = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) d[i] += g[i];
      }
      return;
    }
    case OpKind::kTranspose: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const std::size_t m = d.shape()[0], n = d.shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
      }
      return;
    }
    case OpKind::kSliceRows: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const std::size_t offset = static_cast<std::size_t>(node.ints[0]) * g.cols();
      for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
      return;
    }
    case OpKind::kSliceCols: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const std::size_t start = static_cast<std::size_t>(node.ints[0]);
      const std::size_t m = g.shape()[0], w = g.shape()[1], n = d.shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) d[i * n + start + j] += g[i * w + j];
      }
      return;
    }
    case OpKind::kConcatCols: {
      const std::size_t m = g.shape()[0], total = g.shape()[1];
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t w = static_cast<std::size_t>(node.ints[k]);
        if (wants(k)) {
          Tensor& d = acc(k);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              d[i * w + j] += g[i * total + offset + j];
            }
          }
        }
        offset += w;
      }
      return;
    }
    case OpKind::kRow: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const std::size_t offset = static_cast<std::size_t>(node.ints[0]) * g.size();
      for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
      return;
    }
    case OpKind::kReshape: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      return;
    }
    case OpKind::kCrossEntropy: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      const double up = g[0];
      for (std::size_t j = 0; j < node.saved.size(); ++j) {
        d[j] += up * node.saved[j];
      }
      d[static_cast<std::size_t>(node.ints[0])] -= up;
      return;
    }
    case OpKind::kSum: {
      if (!wants(0)) return;
      Tensor& d = acc(0);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
      return;
    }
    case OpKind::kDot: {
      const Tensor& x = in_value(0);
      const Tensor& y = in_value(1);
      if (wants(0)) {
        Tensor& d = acc(0);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * y[i];
      }
      if (wants(1)) {
        Tensor& d = acc(1);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * x[i];
      }
      return;
    }
  }
}

std::vector<Tensor> Graph::BackwardAll(Var loss) {
  if (loss.graph() != this) {
    throw ContractError("backward: loss belongs to a different graph");
  }
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        ShapeString(lv.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(lv.shape(), {1.0});
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    BackwardNode(id, grads);
  }
  return grads;
}

GradientSet Graph::Backward(Var loss, const TensorMap& params) {
  std::vector<Tensor> grads = BackwardAll(loss);
  GradientSet out;
  for (const auto& [name, tensor] : params) out.emplace(name, Tensor(tensor.shape()));
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.kind != OpKind::kParameter) continue;
    auto it = out.find(node.param_name);
    if (it == out.end()) {
      throw ContractError("backward: parameter '" + node.param_name +
                          "' is not in the supplied parameter set");
    }
    if (grads[id].empty()) continue;
    if (it->second.shape() != grads[id].shape()) {
      throw ContractError("backward: parameter '" + node.param_name +
                          "' shape " + ShapeString(grads[id].shape()) +
                          " differs from " + ShapeString(it->second.shape()));
    }
    for (std::size_t i = 0; i < grads[id].size(); ++i) {
      it->second[i] += grads[id][i];
    }
  }
  return out;
}

}  // namespace gdrift::ad
