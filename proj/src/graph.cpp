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

#include "kge/graph.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace kge {

namespace {

using Matrix = Tensor::RowMajorMatrix;

[[noreturn]] void shape_error(Op op, const std::string& what) {
  throw ShapeError(std::string(op_name(op)) + ": " + what);
}

[[noreturn]] void mismatch(Op op, const Shape& a, const Shape& b) {
  shape_error(op, "incompatible shapes " + to_string(a) + " and " + to_string(b));
}

Index normalize_axis(Op op, Index axis, Index rank) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

Index prod(const Shape& s, std::size_t from, std::size_t to) {
  Index p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

// ---------------------------------------------------------------------------
// Broadcasting (numpy rules, right-aligned)

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<Index> stride_a;
  std::vector<Index> stride_b;
};

BroadcastPlan plan_broadcast(Op op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      plan.out[i] = pa[i];
    } else if (pa[i] == 1) {
      plan.out[i] = pb[i];
    } else {
      mismatch(op, a, b);
    }
  }
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);
  Index sa = 1, sb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    plan.stride_a[i] = pa[i] == 1 ? 0 : sa;
    plan.stride_b[i] = pb[i] == 1 ? 0 : sb;
    sa *= pa[i];
    sb *= pb[i];
  }
  return plan;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const Index n = shape_size(plan.out);
  if (plan.same) {
    for (Index o = 0; o < n; ++o) f(o, o, o);
    return;
  }
  const auto rank = static_cast<std::ptrdiff_t>(plan.out.size());
  std::vector<Index> counter(plan.out.size(), 0);
  Index ia = 0, ib = 0;
  for (Index o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::ptrdiff_t ax = rank - 1; ax >= 0; --ax) {
      const auto u = static_cast<std::size_t>(ax);
      ia += plan.stride_a[u];
      ib += plan.stride_b[u];
      if (++counter[u] < plan.out[u]) break;
      ia -= plan.stride_a[u] * plan.out[u];
      ib -= plan.stride_b[u] * plan.out[u];
      counter[u] = 0;
    }
  }
}

template <typename F>
Tensor binary_forward(Op op, const Tensor& a, const Tensor& b, F&& f) {
  const BroadcastPlan plan = plan_broadcast(op, a.shape(), b.shape());
  Tensor out(plan.out, Tensor::Uninitialized{});
  double* o = out.ptr();
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  for_each_broadcast(plan, [&](Index i, Index ia, Index ib) { o[i] = f(pa[ia], pb[ib]); });
  return out;
}

template <typename F>
Tensor unary(const Tensor& x, F&& f) {
  Tensor out(x.shape(), Tensor::Uninitialized{});
  const double* in = x.ptr();
  double* o = out.ptr();
  for (Index i = 0; i < x.size(); ++i) o[i] = f(in[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_indices(Op op, const std::vector<Index>& index, Index bound) {
  for (Index i : index) {
    if (i < 0 || i >= bound) {
      shape_error(op, "index " + std::to_string(i) + " out of range [0, " + std::to_string(bound) + ")");
    }
  }
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.shape(), Tensor::Uninitialized{});
  auto in = x.matrix();
  auto o = out.matrix();
  for (Index r = 0; r < in.rows(); ++r) {
    const double m = in.row(r).maxCoeff();
    o.row(r) = (in.row(r).array() - m).exp().matrix();
    o.row(r) /= o.row(r).sum();
  }
  return out;
}

Tensor forward(Op op, const std::vector<const Tensor*>& in, const OpAttrs& at) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) shape_error(op, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
  };
  switch (op) {
    case Op::kLeaf:
      shape_error(op, "leaves are created through constant/variable/parameter");
    case Op::kAdd:
      arity(2);
      return binary_forward(op, *in[0], *in[1], [](double a, double b) { return a + b; });
    case Op::kSub:
      arity(2);
      return binary_forward(op, *in[0], *in[1], [](double a, double b) { return a - b; });
    case Op::kMul:
      arity(2);
      return binary_forward(op, *in[0], *in[1], [](double a, double b) { return a * b; });
    case Op::kDiv:
      arity(2);
      return binary_forward(op, *in[0], *in[1], [](double a, double b) { return a / b; });
    case Op::kNeg:
      arity(1);
      return unary(*in[0], [](double x) { return -x; });
    case Op::kScale:
      arity(1);
      return unary(*in[0], [s = at.alpha](double x) { return s * x; });
    case Op::kAddScalar:
      arity(1);
      return unary(*in[0], [s = at.alpha](double x) { return x + s; });
    case Op::kMatMul: {
      arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch(op, a.shape(), b.shape());
      Tensor out({a.dim(0), b.dim(1)}, Tensor::Uninitialized{});
      out.matrix().noalias() = a.matrix() * b.matrix();
      return out;
    }
    case Op::kBatchMatMul: {
      arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        mismatch(op, a.shape(), b.shape());
      }
      const Index batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
      Tensor out({batch, m, n}, Tensor::Uninitialized{});
      for (Index i = 0; i < batch; ++i) {
        Tensor::ConstMatrixMap ma(a.ptr() + i * m * k, m, k);
        Tensor::ConstMatrixMap mb(b.ptr() + i * k * n, k, n);
        Tensor::MatrixMap mo(out.ptr() + i * m * n, m, n);
        mo.noalias() = ma * mb;
      }
      return out;
    }
    case Op::kTranspose: {
      arity(1);
      const Tensor& a = *in[0];
      if (a.rank() == 2) {
        Tensor out({a.dim(1), a.dim(0)}, Tensor::Uninitialized{});
        out.matrix() = a.matrix().transpose();
        return out;
      }
      if (a.rank() == 3) {
        const Index batch = a.dim(0), m = a.dim(1), n = a.dim(2);
        Tensor out({batch, n, m}, Tensor::Uninitialized{});
        for (Index i = 0; i < batch; ++i) {
          Tensor::MatrixMap(out.ptr() + i * m * n, n, m) =
              Tensor::ConstMatrixMap(a.ptr() + i * m * n, m, n).transpose();
        }
        return out;
      }
      shape_error(op, "expected rank 2 or 3, got shape " + to_string(a.shape()));
    }
    case Op::kReshape: {
      arity(1);
      if (shape_size(at.shape) != in[0]->size()) mismatch(op, in[0]->shape(), at.shape);
      return in[0]->reshaped(at.shape);
    }
    case Op::kConcat: {
      if (in.empty()) shape_error(op, "no inputs");
      const Shape& first = in[0]->shape();
      const auto axis = static_cast<std::size_t>(normalize_axis(op, at.axis, static_cast<Index>(first.size())));
      Shape out_shape = first;
      out_shape[axis] = 0;
      for (const Tensor* t : in) {
        if (t->rank() != static_cast<Index>(first.size())) mismatch(op, first, t->shape());
        for (std::size_t d = 0; d < first.size(); ++d) {
          if (d != axis && t->shape()[d] != first[d]) mismatch(op, first, t->shape());
        }
        out_shape[axis] += t->shape()[axis];
      }
      Tensor out(out_shape, Tensor::Uninitialized{});
      const Index outer = prod(first, 0, axis);
      const Index out_inner = prod(out_shape, axis, out_shape.size());
      Index offset = 0;
      for (const Tensor* t : in) {
        const Index inner = prod(t->shape(), axis, t->shape().size());
        for (Index o = 0; o < outer; ++o) {
          std::copy_n(t->ptr() + o * inner, inner, out.ptr() + o * out_inner + offset);
        }
        offset += inner;
      }
      return out;
    }
    case Op::kSlice: {
      arity(1);
      const Tensor& a = *in[0];
      const auto axis = static_cast<std::size_t>(normalize_axis(op, at.axis, a.rank()));
      if (at.begin < 0 || at.end > a.shape()[axis] || at.begin >= at.end) {
        shape_error(op, "range [" + std::to_string(at.begin) + ", " + std::to_string(at.end) +
                            ") invalid for shape " + to_string(a.shape()));
      }
      Shape out_shape = a.shape();
      out_shape[axis] = at.end - at.begin;
      Tensor out(out_shape, Tensor::Uninitialized{});
      const Index outer = prod(a.shape(), 0, axis);
      const Index after = prod(a.shape(), axis + 1, a.shape().size());
      const Index in_inner = a.shape()[axis] * after;
      const Index out_inner = out_shape[axis] * after;
      for (Index o = 0; o < outer; ++o) {
        std::copy_n(a.ptr() + o * in_inner + at.begin * after, out_inner, out.ptr() + o * out_inner);
      }
      return out;
    }
    case Op::kGather: {
      arity(1);
      const Tensor& table = *in[0];
      if (table.rank() < 1) shape_error(op, "table must have rank >= 1");
      if (at.index.empty()) shape_error(op, "empty index");
      check_indices(op, at.index, table.dim(0));
      Shape out_shape = at.shape.empty() ? Shape{static_cast<Index>(at.index.size())} : at.shape;
      if (shape_size(out_shape) != static_cast<Index>(at.index.size())) {
        shape_error(op, "index shape " + to_string(out_shape) + " does not match " +
                            std::to_string(at.index.size()) + " indices");
      }
      out_shape.insert(out_shape.end(), table.shape().begin() + 1, table.shape().end());
      Tensor out(out_shape, Tensor::Uninitialized{});
      const Index row = table.size() / table.dim(0);
      for (std::size_t i = 0; i < at.index.size(); ++i) {
        std::copy_n(table.ptr() + at.index[i] * row, row, out.ptr() + static_cast<Index>(i) * row);
      }
      return out;
    }
    case Op::kGatherDot: {
      arity(2);
      const Tensor& q = *in[0];
      const Tensor& t = *in[1];
      if (q.rank() != 2 || t.rank() != 2 || q.dim(1) != t.dim(1)) mismatch(op, q.shape(), t.shape());
      if (at.index.size() != at.index2.size() || at.index.empty()) {
        shape_error(op, "query/table index lists must be non-empty and of equal length");
      }
      check_indices(op, at.index, q.dim(0));
      check_indices(op, at.index2, t.dim(0));
      Tensor out({static_cast<Index>(at.index.size())});
      auto mq = q.matrix();
      auto mt = t.matrix();
      for (std::size_t m = 0; m < at.index.size(); ++m) {
        out[static_cast<Index>(m)] = mq.row(at.index[m]).dot(mt.row(at.index2[m]));
      }
      return out;
    }
    case Op::kSum:
      arity(1);
      return Tensor::scalar(in[0]->data().sum());
    case Op::kMean:
      arity(1);
      return Tensor::scalar(in[0]->data().mean());
    case Op::kSumAxis: {
      arity(1);
      const Tensor& a = *in[0];
      const auto axis = static_cast<std::size_t>(normalize_axis(op, at.axis, a.rank()));
      const Index outer = prod(a.shape(), 0, axis);
      const Index n = a.shape()[axis];
      const Index inner = prod(a.shape(), axis + 1, a.shape().size());
      Tensor out(drop_axis(a.shape(), axis));
      for (Index o = 0; o < outer; ++o) {
        for (Index k = 0; k < n; ++k) {
          const double* src = a.ptr() + (o * n + k) * inner;
          double* dst = out.ptr() + o * inner;
          for (Index i = 0; i < inner; ++i) dst[i] += src[i];
        }
      }
      return out;
    }
    case Op::kPNorm: {
      arity(1);
      const Tensor& a = *in[0];
      if (at.p != 1 && at.p != 2) shape_error(op, "p must be 1 or 2, got " + std::to_string(at.p));
      if (a.rank() < 1) shape_error(op, "expected rank >= 1");
      Tensor out(drop_axis(a.shape(), a.shape().size() - 1));
      auto m = a.matrix();
      for (Index r = 0; r < m.rows(); ++r) {
        out[r] = at.p == 1 ? m.row(r).lpNorm<1>() : m.row(r).norm();
      }
      return out;
    }
    case Op::kSquare:
      arity(1);
      return unary(*in[0], [](double x) { return x * x; });
    case Op::kSqrt:
      arity(1);
      return unary(*in[0], [](double x) { return std::sqrt(x); });
    case Op::kExp:
      arity(1);
      return unary(*in[0], [](double x) { return std::exp(x); });
    case Op::kLog:
      arity(1);
      return unary(*in[0], [](double x) { return std::log(x); });
    case Op::kSigmoid:
      arity(1);
      return unary(*in[0], stable_sigmoid);
    case Op::kTanh:
      arity(1);
      return unary(*in[0], [](double x) { return std::tanh(x); });
    case Op::kRelu:
      arity(1);
      return unary(*in[0], [](double x) { return x > 0 ? x : 0.0; });
    case Op::kSoftplus:
      arity(1);
      return unary(*in[0], stable_softplus);
    case Op::kLogSigmoid:
      arity(1);
      return unary(*in[0], [](double x) { return -stable_softplus(-x); });
    case Op::kSoftmax:
      arity(1);
      if (in[0]->rank() < 1) shape_error(op, "expected rank >= 1");
      return softmax_rows(*in[0]);
    case Op::kLogSoftmax: {
      arity(1);
      if (in[0]->rank() < 1) shape_error(op, "expected rank >= 1");
      Tensor out(in[0]->shape(), Tensor::Uninitialized{});
      auto x = in[0]->matrix();
      auto o = out.matrix();
      for (Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        const double lse = m + std::log((x.row(r).array() - m).exp().sum());
        o.row(r) = (x.row(r).array() - lse).matrix();
      }
      return out;
    }
    case Op::kComplexMul: {
      arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.shape() != b.shape() || a.rank() < 1 || a.shape().back() % 2 != 0) mismatch(op, a.shape(), b.shape());
      Tensor out(a.shape(), Tensor::Uninitialized{});
      const Index d = a.shape().back() / 2;
      const Index rows = a.size() / (2 * d);
      const double sign = at.conjugate ? -1.0 : 1.0;
      for (Index r = 0; r < rows; ++r) {
        const double* ar = a.ptr() + 2 * r * d;
        const double* br = b.ptr() + 2 * r * d;
        double* o = out.ptr() + 2 * r * d;
        for (Index i = 0; i < d; ++i) {
          const double x = ar[i], y = ar[d + i], u = br[i], v = sign * br[d + i];
          o[i] = x * u - y * v;
          o[d + i] = x * v + y * u;
        }
      }
      return out;
    }
    case Op::kCircularCorrelation: {
      arity(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.shape() != b.shape() || a.rank() < 1) mismatch(op, a.shape(), b.shape());
      Tensor out(a.shape());
      const Index d = a.shape().back();
      const Index rows = a.size() / d;
      for (Index r = 0; r < rows; ++r) {
        const double* pa = a.ptr() + r * d;
        const double* pb = b.ptr() + r * d;
        double* po = out.ptr() + r * d;
        for (Index i = 0; i < d; ++i) {
          double acc = 0.0;
          for (Index k = 0; k < d; ++k) acc += pa[k] * pb[(i + k) % d];
          po[i] = acc;
        }
      }
      return out;
    }
    case Op::kConv2d: {
      arity(2);
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || w.dim(2) > x.dim(2) || w.dim(3) > x.dim(3)) {
        mismatch(op, x.shape(), w.shape());
      }
      const Index batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
      const Index filters = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      const Index oh = height - kh + 1, ow = width - kw + 1;
      Tensor out({batch, filters, oh, ow});
      for (Index b = 0; b < batch; ++b) {
        for (Index f = 0; f < filters; ++f) {
          for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) {
              double acc = 0.0;
              for (Index c = 0; c < channels; ++c) {
                for (Index u = 0; u < kh; ++u) {
                  for (Index v = 0; v < kw; ++v) acc += x(b, c, i + u, j + v) * w(f, c, u, v);
                }
              }
              out(b, f, i, j) = acc;
            }
          }
        }
      }
      return out;
    }
    case Op::kClamp:
      arity(1);
      if (!(at.alpha <= at.beta)) shape_error(op, "lower bound exceeds upper bound");
      return unary(*in[0], [lo = at.alpha, hi = at.beta](double x) { return std::clamp(x, lo, hi); });
    case Op::kCos:
      arity(1);
      return unary(*in[0], [](double x) { return std::cos(x); });
    case Op::kSin:
      arity(1);
      return unary(*in[0], [](double x) { return std::sin(x); });
  }
  shape_error(op, "unknown op");
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "subtract";
    case Op::kMul: return "hadamard";
    case Op::kDiv: return "divide";
    case Op::kNeg: return "negate";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMatMul: return "matmul";
    case Op::kBatchMatMul: return "batch_matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kGather: return "gather";
    case Op::kGatherDot: return "gather_dot";
    case Op::kSum: return "sum";
    case Op::kSumAxis: return "sum_axis";
    case Op::kMean: return "mean";
    case Op::kPNorm: return "pnorm";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kLogSigmoid: return "log_sigmoid";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kCircularCorrelation: return "circular_correlation";
    case Op::kComplexMul: return "complex_mul";
    case Op::kConv2d: return "conv2d";
    case Op::kClamp: return "clamp";
    case Op::kCos: return "cos";
    case Op::kSin: return "sin";
  }
  return "unknown";
}

const Tensor& Gradients::at(NodeId id) const {
  const Tensor* g = find(id);
  if (!g) throw std::out_of_range("no gradient for node " + std::to_string(to_index(id)));
  return *g;
}

std::size_t Gradients::size() const {
  return static_cast<std::size_t>(std::count_if(grads_.begin(), grads_.end(), [](const auto& g) { return g.has_value(); }));
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

NodeId Graph::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

NodeId Graph::parameter(const Tensor& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const { return nodes_.at(to_index(id)).value(); }

NodeId Graph::apply(Op op, std::span<const NodeId> inputs, OpAttrs attrs) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  bool grad = false;
  for (NodeId p : inputs) {
    if (to_index(p) >= nodes_.size()) shape_error(op, "unknown input node");
    values.push_back(&value(p));
    grad = grad || requires_grad(p);
  }
  Node n;
  n.owned = forward(op, values, attrs);
  n.op = op;
  n.parents.assign(inputs.begin(), inputs.end());
  n.attrs = std::move(attrs);
  n.requires_grad = grad;
  return push(std::move(n));
}

void Graph::accumulate(Gradients& grads, NodeId id, Tensor contribution) const {
  auto& slot = grads.grads_[to_index(id)];
  if (slot) {
    slot->data() += contribution.data();
  } else {
    slot = std::move(contribution);
  }
}

Gradients Graph::backward(NodeId loss) const {
  const std::size_t root = to_index(loss);
  if (root >= nodes_.size()) throw ShapeError("backward: unknown loss node");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(value(loss).shape()));
  }
  Gradients grads(nodes_.size());
  if (!nodes_[root].requires_grad) return grads;
  grads.grads_[root] = Tensor::constant(value(loss).shape(), 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    const auto& g = grads.grads_[i];
    if (!g || nodes_[i].op == Op::kLeaf) continue;
    backward_node(nodes_[i], *g, grads);
    if (i != root) grads.grads_[i].reset();
  }
  return grads;
}

void Graph::backward_node(const Node& node, const Tensor& grad, Gradients& grads) const {
  const auto& parents = node.parents;
  auto wants = [&](std::size_t k) { return requires_grad(parents[k]); };
  auto in = [&](std::size_t k) -> const Tensor& { return value(parents[k]); };
  const Tensor& y = node.value();
  const OpAttrs& at = node.attrs;
  const double* g = grad.ptr();

  // Elementwise unary rule: dx = g * f'(x, y).
  auto unary_rule = [&](auto&& deriv) {
    if (!wants(0)) return;
    const Tensor& x = in(0);
    Tensor dx(x.shape(), Tensor::Uninitialized{});
    for (Index i = 0; i < x.size(); ++i) dx[i] = g[i] * deriv(x[i], y[i]);
    accumulate(grads, parents[0], std::move(dx));
  };

  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const BroadcastPlan plan = plan_broadcast(node.op, a.shape(), b.shape());
      std::optional<Tensor> da, db;
      if (wants(0)) plan.same ? da.emplace(a.shape(), Tensor::Uninitialized{}) : da.emplace(a.shape());
      if (wants(1)) plan.same ? db.emplace(b.shape(), Tensor::Uninitialized{}) : db.emplace(b.shape());
      double* pda = da ? da->ptr() : nullptr;
      double* pdb = db ? db->ptr() : nullptr;
      const double* pa = a.ptr();
      const double* pb = b.ptr();
      const Op op = node.op;
      if (plan.same) {
        const Index n = a.size();
        const auto ga = Eigen::Map<const Eigen::ArrayXd>(g, n);
        const auto va = Eigen::Map<const Eigen::ArrayXd>(pa, n);
        const auto vb = Eigen::Map<const Eigen::ArrayXd>(pb, n);
        if (da) {
          auto out = Eigen::Map<Eigen::ArrayXd>(pda, n);
          if (op == Op::kMul) {
            out = ga * vb;
          } else if (op == Op::kDiv) {
            out = ga / vb;
          } else {
            out = ga;
          }
        }
        if (db) {
          auto out = Eigen::Map<Eigen::ArrayXd>(pdb, n);
          if (op == Op::kMul) {
            out = ga * va;
          } else if (op == Op::kDiv) {
            out = -ga * va / vb.square();
          } else if (op == Op::kSub) {
            out = -ga;
          } else {
            out = ga;
          }
        }
        if (da) accumulate(grads, parents[0], std::move(*da));
        if (db) accumulate(grads, parents[1], std::move(*db));
        return;
      }
      for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
        switch (op) {
          case Op::kAdd:
            if (pda) pda[ia] += g[o];
            if (pdb) pdb[ib] += g[o];
            break;
          case Op::kSub:
            if (pda) pda[ia] += g[o];
            if (pdb) pdb[ib] -= g[o];
            break;
          case Op::kMul:
            if (pda) pda[ia] += g[o] * pb[ib];
            if (pdb) pdb[ib] += g[o] * pa[ia];
            break;
          default:
            if (pda) pda[ia] += g[o] / pb[ib];
            if (pdb) pdb[ib] -= g[o] * pa[ia] / (pb[ib] * pb[ib]);
            break;
        }
      });
      if (da) accumulate(grads, parents[0], std::move(*da));
      if (db) accumulate(grads, parents[1], std::move(*db));
      return;
    }
    case Op::kNeg:
      return unary_rule([](double, double) { return -1.0; });
    case Op::kScale:
      return unary_rule([s = at.alpha](double, double) { return s; });
    case Op::kAddScalar:
      return unary_rule([](double, double) { return 1.0; });
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (wants(0)) {
        Tensor da(a.shape(), Tensor::Uninitialized{});
        da.matrix().noalias() = grad.matrix() * b.matrix().transpose();
        accumulate(grads, parents[0], std::move(da));
      }
      if (wants(1)) {
        Tensor db(b.shape(), Tensor::Uninitialized{});
        db.matrix().noalias() = a.matrix().transpose() * grad.matrix();
        accumulate(grads, parents[1], std::move(db));
      }
      return;
    }
    case Op::kBatchMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Index batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
      std::optional<Tensor> da, db;
      if (wants(0)) da.emplace(a.shape(), Tensor::Uninitialized{});
      if (wants(1)) db.emplace(b.shape(), Tensor::Uninitialized{});
      for (Index i = 0; i < batch; ++i) {
        Tensor::ConstMatrixMap mg(g + i * m * n, m, n);
        if (da) {
          Tensor::MatrixMap(da->ptr() + i * m * k, m, k).noalias() =
              mg * Tensor::ConstMatrixMap(b.ptr() + i * k * n, k, n).transpose();
        }
        if (db) {
          Tensor::MatrixMap(db->ptr() + i * k * n, k, n).noalias() =
              Tensor::ConstMatrixMap(a.ptr() + i * m * k, m, k).transpose() * mg;
        }
      }
      if (da) accumulate(grads, parents[0], std::move(*da));
      if (db) accumulate(grads, parents[1], std::move(*db));
      return;
    }
    case Op::kTranspose: {
      if (!wants(0)) return;
      std::vector<const Tensor*> gin{&grad};
      accumulate(grads, parents[0], forward(Op::kTranspose, gin, at));
      return;
    }
    case Op::kReshape:
      if (wants(0)) accumulate(grads, parents[0], grad.reshaped(in(0).shape()));
      return;
    case Op::kConcat: {
      const auto axis = static_cast<std::size_t>(normalize_axis(node.op, at.axis, y.rank()));
      Index begin = 0;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        const Index extent = in(k).shape()[axis];
        if (wants(k)) {
          OpAttrs sl;
          sl.axis = static_cast<Index>(axis);
          sl.begin = begin;
          sl.end = begin + extent;
          std::vector<const Tensor*> gin{&grad};
          accumulate(grads, parents[k], forward(Op::kSlice, gin, sl));
        }
        begin += extent;
      }
      return;
    }
    case Op::kSlice: {
      if (!wants(0)) return;
      const Tensor& a = in(0);
      const auto axis = static_cast<std::size_t>(normalize_axis(node.op, at.axis, a.rank()));
      Tensor da(a.shape());
      const Index outer = prod(a.shape(), 0, axis);
      const Index after = prod(a.shape(), axis + 1, a.shape().size());
      const Index in_inner = a.shape()[axis] * after;
      const Index out_inner = (at.end - at.begin) * after;
      for (Index o = 0; o < outer; ++o) {
        std::copy_n(g + o * out_inner, out_inner, da.ptr() + o * in_inner + at.begin * after);
      }
      accumulate(grads, parents[0], std::move(da));
      return;
    }
    case Op::kGather: {
      if (!wants(0)) return;
      const Tensor& table = in(0);
      Tensor dt(table.shape());
      const Index row = table.size() / table.dim(0);
      for (std::size_t i = 0; i < at.index.size(); ++i) {
        double* dst = dt.ptr() + at.index[i] * row;
        const double* src = g + static_cast<Index>(i) * row;
        for (Index j = 0; j < row; ++j) dst[j] += src[j];
      }
      accumulate(grads, parents[0], std::move(dt));
      return;
    }
    case Op::kGatherDot: {
      const Tensor& q = in(0);
      const Tensor& t = in(1);
      std::optional<Tensor> dq, dt;
      if (wants(0)) dq.emplace(q.shape());
      if (wants(1)) dt.emplace(t.shape());
      auto mq = q.matrix();
      auto mt = t.matrix();
      for (std::size_t m = 0; m < at.index.size(); ++m) {
        const double gm = g[m];
        if (dq) dq->matrix().row(at.index[m]) += gm * mt.row(at.index2[m]);
        if (dt) dt->matrix().row(at.index2[m]) += gm * mq.row(at.index[m]);
      }
      if (dq) accumulate(grads, parents[0], std::move(*dq));
      if (dt) accumulate(grads, parents[1], std::move(*dt));
      return;
    }
    case Op::kSum:
      if (wants(0)) accumulate(grads, parents[0], Tensor::constant(in(0).shape(), g[0]));
      return;
    case Op::kMean:
      if (wants(0)) {
        accumulate(grads, parents[0], Tensor::constant(in(0).shape(), g[0] / static_cast<double>(in(0).size())));
      }
      return;
    case Op::kSumAxis: {
      if (!wants(0)) return;
      const Tensor& a = in(0);
      const auto axis = static_cast<std::size_t>(normalize_axis(node.op, at.axis, a.rank()));
      const Index outer = prod(a.shape(), 0, axis);
      const Index n = a.shape()[axis];
      const Index inner = prod(a.shape(), axis + 1, a.shape().size());
      Tensor da(a.shape(), Tensor::Uninitialized{});
      for (Index o = 0; o < outer; ++o) {
        for (Index k = 0; k < n; ++k) std::copy_n(g + o * inner, inner, da.ptr() + (o * n + k) * inner);
      }
      accumulate(grads, parents[0], std::move(da));
      return;
    }
    case Op::kPNorm: {
      if (!wants(0)) return;
      const Tensor& a = in(0);
      Tensor da(a.shape());
      auto x = a.matrix();
      auto dx = da.matrix();
      for (Index r = 0; r < x.rows(); ++r) {
        if (at.p == 1) {
          // Subgradient 0 at x_i == 0.
          dx.row(r) = g[r] * x.row(r).array().sign().matrix();
        } else if (y[r] > 0) {
          dx.row(r) = (g[r] / y[r]) * x.row(r);
        }
      }
      accumulate(grads, parents[0], std::move(da));
      return;
    }
    case Op::kSquare:
      return unary_rule([](double x, double) { return 2.0 * x; });
    case Op::kSqrt:
      return unary_rule([](double, double v) { return v > 0 ? 0.5 / v : 0.0; });
    case Op::kExp:
      return unary_rule([](double, double v) { return v; });
    case Op::kLog:
      return unary_rule([](double x, double) { return 1.0 / x; });
    case Op::kSigmoid:
      return unary_rule([](double, double v) { return v * (1.0 - v); });
    case Op::kTanh:
      return unary_rule([](double, double v) { return 1.0 - v * v; });
    case Op::kRelu:
      return unary_rule([](double x, double) { return x > 0 ? 1.0 : 0.0; });
    case Op::kSoftplus:
      return unary_rule([](double x, double) { return stable_sigmoid(x); });
    case Op::kLogSigmoid:
      return unary_rule([](double x, double) { return stable_sigmoid(-x); });
    case Op::kSoftmax: {
      if (!wants(0)) return;
      Tensor dx(y.shape(), Tensor::Uninitialized{});
      auto my = y.matrix();
      auto mg = grad.matrix();
      auto md = dx.matrix();
      for (Index r = 0; r < my.rows(); ++r) {
        const double dot = my.row(r).dot(mg.row(r));
        md.row(r) = (my.row(r).array() * (mg.row(r).array() - dot)).matrix();
      }
      accumulate(grads, parents[0], std::move(dx));
      return;
    }
    case Op::kLogSoftmax: {
      if (!wants(0)) return;
      Tensor dx(y.shape(), Tensor::Uninitialized{});
      auto my = y.matrix();
      auto mg = grad.matrix();
      auto md = dx.matrix();
      for (Index r = 0; r < my.rows(); ++r) {
        const double total = mg.row(r).sum();
        md.row(r) = mg.row(r) - total * my.row(r).array().exp().matrix();
      }
      accumulate(grads, parents[0], std::move(dx));
      return;
    }
    case Op::kComplexMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Index d = a.shape().back() / 2;
      const Index rows = a.size() / (2 * d);
      const double sign = at.conjugate ? -1.0 : 1.0;
      std::optional<Tensor> da, db;
      if (wants(0)) da.emplace(a.shape(), Tensor::Uninitialized{});
      if (wants(1)) db.emplace(b.shape(), Tensor::Uninitialized{});
      for (Index r = 0; r < rows; ++r) {
        const double* ar = a.ptr() + 2 * r * d;
        const double* br = b.ptr() + 2 * r * d;
        const double* gr = g + 2 * r * d;
        double* pa = da ? da->ptr() + 2 * r * d : nullptr;
        double* pb = db ? db->ptr() + 2 * r * d : nullptr;
        for (Index i = 0; i < d; ++i) {
          const double x = ar[i], y = ar[d + i], u = br[i], v = sign * br[d + i];
          const double gre = gr[i], gim = gr[d + i];
          if (pa) {
            pa[i] = gre * u + gim * v;
            pa[d + i] = gim * u - gre * v;
          }
          if (pb) {
            pb[i] = gre * x + gim * y;
            pb[d + i] = sign * (gim * x - gre * y);
          }
        }
      }
      if (da) accumulate(grads, parents[0], std::move(*da));
      if (db) accumulate(grads, parents[1], std::move(*db));
      return;
    }
    case Op::kCircularCorrelation: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Index d = a.shape().back();
      const Index rows = a.size() / d;
      std::optional<Tensor> da, db;
      if (wants(0)) da.emplace(a.shape());
      if (wants(1)) db.emplace(b.shape());
      for (Index r = 0; r < rows; ++r) {
        const double* pa = a.ptr() + r * d;
        const double* pb = b.ptr() + r * d;
        const double* pg = g + r * d;
        for (Index i = 0; i < d; ++i) {
          for (Index k = 0; k < d; ++k) {
            const Index j = (i + k) % d;
            if (da) da->ptr()[r * d + k] += pg[i] * pb[j];
            if (db) db->ptr()[r * d + j] += pg[i] * pa[k];
          }
        }
      }
      if (da) accumulate(grads, parents[0], std::move(*da));
      if (db) accumulate(grads, parents[1], std::move(*db));
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Index batch = x.dim(0), channels = x.dim(1);
      const Index filters = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      const Index oh = y.dim(2), ow = y.dim(3);
      std::optional<Tensor> dx, dw;
      if (wants(0)) dx.emplace(x.shape());
      if (wants(1)) dw.emplace(w.shape());
      for (Index b = 0; b < batch; ++b) {
        for (Index f = 0; f < filters; ++f) {
          for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) {
              const double gv = grad(b, f, i, j);
              if (gv == 0.0) continue;
              for (Index c = 0; c < channels; ++c) {
                for (Index u = 0; u < kh; ++u) {
                  for (Index v = 0; v < kw; ++v) {
                    if (dx) (*dx)(b, c, i + u, j + v) += gv * w(f, c, u, v);
                    if (dw) (*dw)(f, c, u, v) += gv * x(b, c, i + u, j + v);
                  }
                }
              }
            }
          }
        }
      }
      if (dx) accumulate(grads, parents[0], std::move(*dx));
      if (dw) accumulate(grads, parents[1], std::move(*dw));
      return;
    }
    case Op::kClamp:
      return unary_rule([lo = at.alpha, hi = at.beta](double x, double) { return x >= lo && x <= hi ? 1.0 : 0.0; });
    case Op::kCos:
      return unary_rule([](double x, double) { return -std::sin(x); });
    case Op::kSin:
      return unary_rule([](double x, double) { return std::cos(x); });
  }
}

double Graph::kink_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    if (!n.requires_grad || n.parents.empty()) continue;
    const Tensor& x = value(n.parents[0]);
    switch (n.op) {
      case Op::kRelu:
        margin = std::min(margin, x.data().cwiseAbs().minCoeff());
        break;
      case Op::kPNorm:
        margin = std::min(margin, n.attrs.p == 1 ? x.data().cwiseAbs().minCoeff() : n.value().data().minCoeff());
        break;
      case Op::kSqrt:
        margin = std::min(margin, x.data().minCoeff());
        break;
      case Op::kClamp:
        margin = std::min({margin, (x.data().array() - n.attrs.alpha).abs().minCoeff(),
                           (x.data().array() - n.attrs.beta).abs().minCoeff()});
        break;
      default:
        break;
    }
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Expression helpers

Var apply(Op op, std::span<const Var> inputs, OpAttrs attrs) {
  if (inputs.empty()) throw ShapeError(std::string(op_name(op)) + ": no inputs");
  Graph* g = inputs.front().graph;
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph != g) throw ShapeError(std::string(op_name(op)) + ": inputs from different graphs");
    ids.push_back(v.id);
  }
  return {g, g->apply(op, ids, std::move(attrs))};
}

namespace {
Var un(Op op, Var a, OpAttrs attrs = {}) {
  const Var in[] = {a};
  return apply(op, in, std::move(attrs));
}
Var bin(Op op, Var a, Var b, OpAttrs attrs = {}) {
  const Var in[] = {a, b};
  return apply(op, in, std::move(attrs));
}
}  // namespace

Var operator+(Var a, Var b) { return bin(Op::kAdd, a, b); }
Var operator-(Var a, Var b) { return bin(Op::kSub, a, b); }
Var operator*(Var a, Var b) { return bin(Op::kMul, a, b); }
Var operator/(Var a, Var b) { return bin(Op::kDiv, a, b); }
Var operator-(Var a) { return un(Op::kNeg, a); }
Var operator*(double s, Var a) { return un(Op::kScale, a, {.alpha = s}); }
Var operator*(Var a, double s) { return s * a; }
Var operator+(Var a, double s) { return un(Op::kAddScalar, a, {.alpha = s}); }
Var operator+(double s, Var a) { return a + s; }
Var operator-(Var a, double s) { return a + (-s); }
Var operator-(double s, Var a) { return (-a) + s; }

Var matmul(Var a, Var b) { return bin(Op::kMatMul, a, b); }
Var batch_matmul(Var a, Var b) { return bin(Op::kBatchMatMul, a, b); }
Var transpose(Var a) { return un(Op::kTranspose, a); }
Var reshape(Var a, Shape shape) { return un(Op::kReshape, a, {.shape = std::move(shape)}); }
Var concat(std::span<const Var> parts, Index axis) { return apply(Op::kConcat, parts, {.axis = axis}); }
Var concat(std::initializer_list<Var> parts, Index axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
Var slice(Var a, Index axis, Index begin, Index end) {
  return un(Op::kSlice, a, {.axis = axis, .begin = begin, .end = end});
}
Var gather(Var table, std::vector<Index> index, Shape index_shape) {
  return un(Op::kGather, table, {.shape = std::move(index_shape), .index = std::move(index)});
}
Var gather(Var table, std::vector<Index> index) { return gather(table, std::move(index), {}); }
Var gather_dot(Var query, Var table, std::vector<Index> query_rows, std::vector<Index> table_rows) {
  return bin(Op::kGatherDot, query, table, {.index = std::move(query_rows), .index2 = std::move(table_rows)});
}
Var sum(Var a) { return un(Op::kSum, a); }
Var sum(Var a, Index axis) { return un(Op::kSumAxis, a, {.axis = axis}); }
Var mean(Var a) { return un(Op::kMean, a); }
Var pnorm(Var a, int p) { return un(Op::kPNorm, a, {.p = p}); }
Var square(Var a) { return un(Op::kSquare, a); }
Var sqrt(Var a) { return un(Op::kSqrt, a); }
Var exp(Var a) { return un(Op::kExp, a); }
Var log(Var a) { return un(Op::kLog, a); }
Var sigmoid(Var a) { return un(Op::kSigmoid, a); }
Var tanh(Var a) { return un(Op::kTanh, a); }
Var relu(Var a) { return un(Op::kRelu, a); }
Var softplus(Var a) { return un(Op::kSoftplus, a); }
Var log_sigmoid(Var a) { return un(Op::kLogSigmoid, a); }
Var softmax(Var a) { return un(Op::kSoftmax, a); }
Var log_softmax(Var a) { return un(Op::kLogSoftmax, a); }
Var circular_correlation(Var a, Var b) { return bin(Op::kCircularCorrelation, a, b); }

Var complex_mul(Var a, Var b, bool conjugate) { return bin(Op::kComplexMul, a, b, {.conjugate = conjugate}); }
Var conv2d(Var input, Var filters) { return bin(Op::kConv2d, input, filters); }
Var clamp(Var a, double lo, double hi) { return un(Op::kClamp, a, {.alpha = lo, .beta = hi}); }
Var cos(Var a) { return un(Op::kCos, a); }
Var sin(Var a) { return un(Op::kSin, a); }

}  // namespace kge
