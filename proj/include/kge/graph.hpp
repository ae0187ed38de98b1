/*
 * Copyright 2026 The kge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kge/tensor.hpp"

namespace kge {

/// Dense, topologically ordered node handle inside one Graph.
enum class NodeId : std::size_t {};

inline std::size_t to_index(NodeId id) { return static_cast<std::size_t>(id); }

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,  // Hadamard product with broadcasting
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kMatMul,
  kBatchMatMul,
  kTranspose,
  kReshape,
  kConcat,
  kSlice,
  kGather,
  kGatherDot,
  kSum,
  kSumAxis,
  kMean,
  kPNorm,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kSigmoid,
  kTanh,
  kRelu,
  kSoftplus,
  kLogSigmoid,
  kSoftmax,
  kLogSoftmax,
  kCircularCorrelation,
  kConv2d,
  kClamp,
  kCos,
  kSin,
  kComplexMul,
};

std::string_view op_name(Op op);

/// Per-op attributes. Only the fields relevant to a given op are read.
struct OpAttrs {
  double alpha = 0.0;  // scale factor, added scalar, clamp lower bound
  double beta = 0.0;   // clamp upper bound
  Index axis = -1;
  int p = 2;
  bool conjugate = false;  // complex_mul: conjugate the second factor
  Index begin = 0;
  Index end = 0;
  Shape shape;                // reshape target, gather index shape
  std::vector<Index> index;   // gather rows, gather_dot query rows
  std::vector<Index> index2;  // gather_dot table rows
};

class Gradients {
 public:
  explicit Gradients(std::size_t n) : grads_(n) {}

  bool contains(NodeId id) const { return find(id) != nullptr; }
  const Tensor* find(NodeId id) const {
    const auto& g = grads_.at(to_index(id));
    return g ? &*g : nullptr;
  }
  const Tensor& at(NodeId id) const;
  std::size_t size() const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
};

/// Append-only computation graph with eager forward evaluation.
///
/// Values are computed when a node is appended; `backward` walks the nodes in
/// reverse creation order, which is a valid reverse topological order because
/// parents always precede children. A graph is confined to one thread.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value);
  NodeId variable(Tensor value);
  /// Leaf that refers to externally owned storage; `value` must outlive the graph.
  NodeId parameter(const Tensor& value);

  /// Appends one node of kind `op`. Throws ShapeError naming the op and the
  /// offending shapes when inputs are incompatible.
  NodeId apply(Op op, std::span<const NodeId> inputs, OpAttrs attrs = {});

  const Tensor& value(NodeId id) const;
  Op op(NodeId id) const { return nodes_.at(to_index(id)).op; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(to_index(id)).parents; }
  bool requires_grad(NodeId id) const { return nodes_.at(to_index(id)).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar node. Every reachable leaf that requires
  /// a gradient receives one, as does the loss node; contributions from
  /// multiple paths are summed. Interior gradients are released once used.
  Gradients backward(NodeId loss) const;

  /// Smallest distance of any non-differentiable point (relu/abs/clamp/sqrt
  /// input, zero 2-norm) to the kink; +inf when the graph has none.
  double kink_margin() const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<NodeId> parents;
    Tensor owned;
    const Tensor* external = nullptr;
    OpAttrs attrs;
    bool requires_grad = false;

    const Tensor& value() const { return external ? *external : owned; }
  };

  NodeId push(Node node);
  void backward_node(const Node& node, const Tensor& grad, Gradients& grads) const;
  void accumulate(Gradients& grads, NodeId id, Tensor contribution) const;

  std::vector<Node> nodes_;
};

/// Node handle bound to its graph, used to write formulas as expressions.
struct Var {
  Graph* graph = nullptr;
  NodeId id{};

  const Tensor& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
};

inline Var constant(Graph& g, Tensor t) { return {&g, g.constant(std::move(t))}; }
inline Var variable(Graph& g, Tensor t) { return {&g, g.variable(std::move(t))}; }
inline Var parameter(Graph& g, const Tensor& t) { return {&g, g.parameter(t)}; }

Var apply(Op op, std::span<const Var> inputs, OpAttrs attrs = {});

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double s, Var a);
Var operator*(Var a, double s);
Var operator+(Var a, double s);
Var operator+(double s, Var a);
Var operator-(Var a, double s);
Var operator-(double s, Var a);

Var matmul(Var a, Var b);
/// [B,m,k] x [B,k,n] -> [B,m,n]
Var batch_matmul(Var a, Var b);
/// Swaps the last two axes.
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var concat(std::span<const Var> parts, Index axis);
Var concat(std::initializer_list<Var> parts, Index axis);
Var slice(Var a, Index axis, Index begin, Index end);
/// Rows of `table` selected by `index`; result shape is index_shape + table.shape[1:].
Var gather(Var table, std::vector<Index> index, Shape index_shape);
Var gather(Var table, std::vector<Index> index);
/// out[m] = <query[query_rows[m]], table[table_rows[m]]>, both operands rank 2.
Var gather_dot(Var query, Var table, std::vector<Index> query_rows, std::vector<Index> table_rows);
Var sum(Var a);
Var sum(Var a, Index axis);
Var mean(Var a);
/// p-norm over the last axis, p in {1, 2}.
Var pnorm(Var a, int p);
Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var log_sigmoid(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
/// [a ⋆ b]_i = sum_k a_k b_{(i+k) mod d} over the last axis.
Var circular_correlation(Var a, Var b);
/// Valid-padding, stride-1 convolution: [B,C,H,W] x [F,C,kh,kw] -> [B,F,H-kh+1,W-kw+1].
Var conv2d(Var input, Var filters);
Var clamp(Var a, double lo, double hi);
Var cos(Var a);
Var sin(Var a);
/// Elementwise complex product of equally shaped tensors whose last axis holds
/// real parts followed by imaginary parts; `conjugate` uses conj(b).
Var complex_mul(Var a, Var b, bool conjugate = false);

}  // namespace kge
