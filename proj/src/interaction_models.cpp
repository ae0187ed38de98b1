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

#include <cmath>

#include "kge/error.hpp"
#include "kge/interactions.hpp"

namespace kge {

namespace {

using Ids = std::vector<Index>;
using Post = Interaction::Factorization::Post;

ParameterLayout xavier(std::string name, Shape shape, double fan_in, double fan_out) {
  return {std::move(name), std::move(shape), InitKind::kXavier, fan_in, fan_out, 0.0, false};
}

/// Embedding table [n, d].
ParameterLayout table(std::string name, Index n, Index d) {
  return xavier(std::move(name), {n, d}, static_cast<double>(d), static_cast<double>(n));
}

/// Stack of n matrices [rows, cols].
ParameterLayout matrices(std::string name, Index n, Index rows, Index cols) {
  return xavier(std::move(name), {n, rows, cols}, static_cast<double>(cols), static_cast<double>(rows));
}

ParameterLayout constant_param(std::string name, Shape shape, double value) {
  return {std::move(name), std::move(shape), InitKind::kConstant, 1.0, 1.0, value, false};
}

Index len(const Ids& ids) { return static_cast<Index>(ids.size()); }

/// Row-wise dot product over the last axis.
Var rowdot(Var a, Var b) { return sum(a * b, -1); }

Var sqnorm(Var a) { return sum(square(a), -1); }

/// [B, a, b] x [B, b] -> [B, a].
Var matvec(Var m, Var x) {
  const Index b = m.dim(0), rows = m.dim(1), cols = m.dim(2);
  return reshape(batch_matmul(m, reshape(x, {b, cols, 1})), {b, rows});
}

/// M_b e for every query b and entity e: [B, a, b] x [N, b] -> [B, N, a].
Var apply_to_all(Var m, Var entities) {
  const Index b = m.dim(0), rows = m.dim(1), cols = m.dim(2);
  const Index n = entities.dim(0);
  Var y = matmul(reshape(m, {b * rows, cols}), transpose(entities));
  return transpose(reshape(y, {b, rows, n}));
}

/// Squared-distance factorization ‖q - e‖² written as -(‖q‖² - 2 q.e + ‖e‖²).
Interaction::Factorization distance_factor(Var query, Var entities, bool take_root) {
  Interaction::Factorization f{query, entities};
  f.scale = 2.0;
  f.query_bias = -sqnorm(query);
  f.candidate_bias = -sqnorm(entities);
  f.post = take_root ? Post::kNegSqrtNeg : Post::kIdentity;
  return f;
}

/// Broadcast a per-query [B, d] and a per-entity [N, d] into [B, N, d].
Var pairwise_difference(Var query, Var entities) {
  return reshape(query, {query.dim(0), 1, query.dim(1)}) - reshape(entities, {1, entities.dim(0), entities.dim(1)});
}

class UM final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    return {table("entity", num_entities(), spec().embedding_dim)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return -sqnorm(gather(p("entity"), h) - gather(p("entity"), t));
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids&) const override {
    return distance_factor(gather(p("entity"), h), p("entity"), false);
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids&, const Ids& t) const override {
    return distance_factor(gather(p("entity"), t), p("entity"), false);
  }
};

class SE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), matrices("head_projection", num_relations(), d, d),
            matrices("tail_projection", num_relations(), d, d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var mh = gather(p("head_projection"), r);
    const Var mt = gather(p("tail_projection"), r);
    return -pnorm(matvec(mh, gather(p("entity"), h)) - matvec(mt, gather(p("entity"), t)), 1);
  }

 protected:
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Var q = matvec(gather(p("head_projection"), r), gather(p("entity"), h));
    const Var all = apply_to_all(gather(p("tail_projection"), r), p("entity"));
    return -pnorm(reshape(q, {len(h), 1, q.dim(1)}) - all, 1);
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Var q = matvec(gather(p("tail_projection"), r), gather(p("entity"), t));
    const Var all = apply_to_all(gather(p("head_projection"), r), p("entity"));
    return -pnorm(all - reshape(q, {len(t), 1, q.dim(1)}), 1);
  }
};

class TransE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), table("relation", num_relations(), d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return -pnorm(gather(p("entity"), h) + gather(p("relation"), r) - gather(p("entity"), t), spec().p);
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    if (spec().p != 2) return std::nullopt;
    return distance_factor(gather(p("entity"), h) + gather(p("relation"), r), p("entity"), true);
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    if (spec().p != 2) return std::nullopt;
    return distance_factor(gather(p("entity"), t) - gather(p("relation"), r), p("entity"), true);
  }
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Var q = gather(p("entity"), h) + gather(p("relation"), r);
    return -pnorm(pairwise_difference(q, p("entity")), spec().p);
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Var q = gather(p("entity"), t) - gather(p("relation"), r);
    return -pnorm(pairwise_difference(q, p("entity")), spec().p);
  }
};

class TransH final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), table("normal", num_relations(), d),
            table("translation", num_relations(), d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var w = gather(p("normal"), r);
    const Var hv = gather(p("entity"), h);
    const Var tv = gather(p("entity"), t);
    const Index b = len(h);
    const Var hr = hv - reshape(rowdot(w, hv), {b, 1}) * w;
    const Var tr = tv - reshape(rowdot(w, tv), {b, 1}) * w;
    return -sqnorm(hr + gather(p("translation"), r) - tr);
  }

 protected:
  /// Projections of every entity onto the hyperplanes of the batch: [B, N, d].
  Var project_all(Binding& p, Var w) const {
    const Index b = w.dim(0), d = w.dim(1);
    const Var e = p("entity");
    const Var wt = matmul(w, transpose(e));
    return reshape(e, {1, num_entities(), d}) - reshape(wt, {b, num_entities(), 1}) * reshape(w, {b, 1, d});
  }
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Var w = gather(p("normal"), r);
    const Var hv = gather(p("entity"), h);
    const Index b = len(h);
    const Var q = hv - reshape(rowdot(w, hv), {b, 1}) * w + gather(p("translation"), r);
    return -sqnorm(reshape(q, {b, 1, q.dim(1)}) - project_all(p, w));
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Var w = gather(p("normal"), r);
    const Var tv = gather(p("entity"), t);
    const Index b = len(t);
    const Var q = tv - reshape(rowdot(w, tv), {b, 1}) * w - gather(p("translation"), r);
    return -sqnorm(project_all(p, w) - reshape(q, {b, 1, q.dim(1)}));
  }
};

class TransR final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, k = spec().resolved_relation_dim();
    return {table("entity", num_entities(), d), table("relation", num_relations(), k),
            matrices("projection", num_relations(), k, d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var m = gather(p("projection"), r);
    return -sqnorm(matvec(m, gather(p("entity"), h)) + gather(p("relation"), r) - matvec(m, gather(p("entity"), t)));
  }

 protected:
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Var m = gather(p("projection"), r);
    const Var q = matvec(m, gather(p("entity"), h)) + gather(p("relation"), r);
    return -sqnorm(reshape(q, {len(h), 1, q.dim(1)}) - apply_to_all(m, p("entity")));
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Var m = gather(p("projection"), r);
    const Var q = matvec(m, gather(p("entity"), t)) - gather(p("relation"), r);
    return -sqnorm(apply_to_all(m, p("entity")) - reshape(q, {len(t), 1, q.dim(1)}));
  }
};

class TransD final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, k = spec().resolved_relation_dim();
    return {table("entity", num_entities(), d), table("entity_projection", num_entities(), d),
            table("relation", num_relations(), k), table("relation_projection", num_relations(), k)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Index b = len(h);
    const Var rp = gather(p("relation_projection"), r);
    auto project = [&](const Ids& ids) {
      const Var e = gather(p("entity"), ids);
      const Var ep = gather(p("entity_projection"), ids);
      return rp * reshape(rowdot(ep, e), {b, 1}) + identity_map(e);
    };
    return -sqnorm(project(h) + gather(p("relation"), r) - project(t));
  }

 protected:
  /// Ĩ e: the first k coordinates of e, zero-padded when k > d.
  Var identity_map(Var e) const {
    const Index d = spec().embedding_dim, k = spec().resolved_relation_dim();
    if (k == d) return e;
    if (k < d) return slice(e, -1, 0, k);
    Shape pad = e.shape();
    pad.back() = k - d;
    return concat({e, constant(*e.graph, Tensor(pad))}, -1);
  }
  /// Projected entities for every query relation: [B, N, k].
  Var project_all(Binding& p, Var rp) const {
    const Index b = rp.dim(0), k = rp.dim(1), n = num_entities();
    const Var dots = sum(p("entity_projection") * p("entity"), -1);
    return reshape(rp, {b, 1, k}) * reshape(dots, {1, n, 1}) + reshape(identity_map(p("entity")), {1, n, k});
  }
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Index b = len(h);
    const Var rp = gather(p("relation_projection"), r);
    const Var e = gather(p("entity"), h);
    const Var q = rp * reshape(rowdot(gather(p("entity_projection"), h), e), {b, 1}) + identity_map(e) +
                  gather(p("relation"), r);
    return -sqnorm(reshape(q, {b, 1, q.dim(1)}) - project_all(p, rp));
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Index b = len(t);
    const Var rp = gather(p("relation_projection"), r);
    const Var e = gather(p("entity"), t);
    const Var q = rp * reshape(rowdot(gather(p("entity_projection"), t), e), {b, 1}) + identity_map(e) -
                  gather(p("relation"), r);
    return -sqnorm(project_all(p, rp) - reshape(q, {b, 1, q.dim(1)}));
  }
};

class RESCAL final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), matrices("relation", num_relations(), d, d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return rowdot(gather(p("entity"), h), matvec(gather(p("relation"), r), gather(p("entity"), t)));
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    return Factorization{matvec(transpose(gather(p("relation"), r)), gather(p("entity"), h)), p("entity")};
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    return Factorization{matvec(gather(p("relation"), r), gather(p("entity"), t)), p("entity")};
  }
};

class DistMult final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), table("relation", num_relations(), d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return sum(gather(p("entity"), h) * gather(p("entity"), t) * gather(p("relation"), r), -1);
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    return Factorization{gather(p("entity"), h) * gather(p("relation"), r), p("entity")};
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    return Factorization{gather(p("relation"), r) * gather(p("entity"), t), p("entity")};
  }
};

class ComplEx final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), 2 * d), table("relation", num_relations(), 2 * d)};
  }

  /// Re(<h, r, conj(t)>).
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return sum(complex_mul(gather(p("entity"), h), gather(p("relation"), r)) * gather(p("entity"), t), -1);
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    return Factorization{complex_mul(gather(p("entity"), h), gather(p("relation"), r)), p("entity")};
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    /// Re(<h, r, conj(t)>) = <h, t ∘ conj(r)> over the real coordinates.
    return Factorization{complex_mul(gather(p("entity"), t), gather(p("relation"), r), true), p("entity")};
  }
};

class RotatE final : public Interaction {
 public:
  using Interaction::Interaction;

  /// exp(iθ) in the real-then-imaginary layout.
  static Var rotation(Binding& p, const Ids& r) {
    const Var theta = gather(p("phase"), r);
    return concat({cos(theta), sin(theta)}, -1);
  }

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    ParameterLayout phase = table("phase", num_relations(), d);
    phase.init = InitKind::kPhase;
    return {table("entity", num_entities(), 2 * d), std::move(phase)};
  }

  /// -‖h ∘ r - t‖ with r = exp(iθ), norm over the 2d real coordinates.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return -pnorm(complex_mul(gather(p("entity"), h), rotation(p, r)) - gather(p("entity"), t), 2);
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    return distance_factor(complex_mul(gather(p("entity"), h), rotation(p, r)), p("entity"), true);
  }
  /// |r| = 1, so ‖h ∘ r - t‖ = ‖h - t ∘ conj(r)‖.
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    return distance_factor(complex_mul(gather(p("entity"), t), rotation(p, r), true), p("entity"), true);
  }
};

class SimplE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity_head", num_entities(), d), table("entity_tail", num_entities(), d),
            table("relation", num_relations(), d), table("relation_inverse", num_relations(), d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var forward = sum(gather(p("entity_head"), h) * gather(p("relation"), r) * gather(p("entity_tail"), t), -1);
    const Var backward =
        sum(gather(p("entity_head"), t) * gather(p("relation_inverse"), r) * gather(p("entity_tail"), h), -1);
    const double c = spec().simple_clamp;
    return clamp(0.5 * (forward + backward), -c, c);
  }

 protected:
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    const Var q = concat({gather(p("entity_head"), h) * gather(p("relation"), r),
                          gather(p("relation_inverse"), r) * gather(p("entity_tail"), h)},
                         -1);
    Factorization f{q, concat({p("entity_tail"), p("entity_head")}, -1)};
    f.scale = 0.5;
    f.post = Post::kClamp;
    f.clamp = spec().simple_clamp;
    return f;
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    const Var q = concat({gather(p("relation"), r) * gather(p("entity_tail"), t),
                          gather(p("entity_head"), t) * gather(p("relation_inverse"), r)},
                         -1);
    Factorization f{q, concat({p("entity_head"), p("entity_tail")}, -1)};
    f.scale = 0.5;
    f.post = Post::kClamp;
    f.clamp = spec().simple_clamp;
    return f;
  }
};

class TuckER final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, k = spec().resolved_relation_dim();
    return {table("entity", num_entities(), d),
            table("relation", num_relations(), k),
            xavier("core", {d, k, d}, static_cast<double>(k * d), static_cast<double>(d * d)),
            constant_param("input_scale", {d}, 1.0),
            constant_param("input_shift", {d}, 0.0),
            constant_param("output_scale", {d}, 1.0),
            constant_param("output_shift", {d}, 0.0)};
  }

  /// 𝔚 ×₁ h ×₂ r ×₃ t with learned affine maps around the h-mode product.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return rowdot(combine(p, h, r), gather(p("entity"), t));
  }

 protected:
  Var combine(Binding& p, const Ids& h, const Ids& r) const {
    const Index b = len(h), d = spec().embedding_dim, k = spec().resolved_relation_dim();
    const Var x = gather(p("entity"), h) * p("input_scale") + p("input_shift");
    const Var xw = reshape(matmul(x, reshape(p("core"), {d, k * d})), {b, k, d});
    const Var z = reshape(batch_matmul(reshape(gather(p("relation"), r), {b, 1, k}), xw), {b, d});
    return z * p("output_scale") + p("output_shift");
  }
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    return Factorization{combine(p, h, r), p("entity")};
  }
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    const Index b = len(t), d = spec().embedding_dim, k = spec().resolved_relation_dim();
    const Var tv = gather(p("entity"), t);
    const Var outer = reshape(reshape(gather(p("relation"), r), {b, k, 1}) * reshape(tv * p("output_scale"), {b, 1, d}),
                              {b, k * d});
    const Var u = matmul(outer, transpose(reshape(p("core"), {d, k * d})));
    Factorization f{u * p("input_scale"), p("entity")};
    f.query_bias = rowdot(u, p("input_shift")) + rowdot(tv, p("output_shift"));
    return f;
  }
};

class ProjE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    const auto fan = static_cast<double>(d);
    return {table("entity", num_entities(), d),
            table("relation", num_relations(), d),
            xavier("entity_diagonal", {d}, fan, fan),
            xavier("relation_diagonal", {d}, fan, fan),
            constant_param("combination_bias", {d}, 0.0),
            constant_param("projection_bias", {1}, 0.0)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var raw = rowdot(gather(p("entity"), t), combine(p, h, r)) + p("projection_bias");
    return activate(spec().outer_activation, raw);
  }

 protected:
  Var combine(Binding& p, const Ids& h, const Ids& r) const {
    const Var c = gather(p("entity"), h) * p("entity_diagonal") + gather(p("relation"), r) * p("relation_diagonal") +
                  p("combination_bias");
    return activate(spec().inner_activation, c);
  }
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    Factorization f{combine(p, h, r), p("entity")};
    f.offset = p("projection_bias");
    switch (spec().outer_activation) {
      case Activation::kIdentity: f.post = Post::kIdentity; break;
      case Activation::kSigmoid: f.post = Post::kSigmoid; break;
      case Activation::kTanh: f.post = Post::kTanh; break;
      case Activation::kRelu: f.post = Post::kRelu; break;
    }
    return f;
  }
};

class HolE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    return {table("entity", num_entities(), d), table("relation", num_relations(), d)};
  }

  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var corr = circular_correlation(gather(p("entity"), h), gather(p("entity"), t));
    return sigmoid(rowdot(gather(p("relation"), r), corr));
  }

 protected:
  /// The coefficient of t_j is the circular convolution (r * h)_j = (rev(r) ⋆ h)_j.
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    const Index d = spec().embedding_dim;
    Ids reversed(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) reversed[static_cast<std::size_t>(k)] = (d - k) % d;
    const Var rev = transpose(gather(transpose(gather(p("relation"), r)), reversed));
    Factorization f{circular_correlation(rev, gather(p("entity"), h)), p("entity")};
    f.post = Post::kSigmoid;
    return f;
  }
  /// The coefficient of h_k is (r ⋆ t)_k.
  std::optional<Factorization> factor_heads(Binding& p, const Ids& r, const Ids& t) const override {
    Factorization f{circular_correlation(gather(p("relation"), r), gather(p("entity"), t)), p("entity")};
    f.post = Post::kSigmoid;
    return f;
  }
};

class KG2E final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim;
    const double mid = 0.5 * (spec().covariance_min + spec().covariance_max);
    ParameterLayout entity_cov = constant_param("entity_covariance", {num_entities(), d}, mid);
    ParameterLayout relation_cov = constant_param("relation_covariance", {num_relations(), d}, mid);
    entity_cov.covariance = relation_cov.covariance = true;
    return {table("entity_mean", num_entities(), d), std::move(entity_cov), table("relation_mean", num_relations(), d),
            std::move(relation_cov)};
  }

  /// P_e = N(μ_h - μ_t, Σ_h + Σ_t) compared against P_r.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var mean_e = gather(p("entity_mean"), h) - gather(p("entity_mean"), t);
    const Var cov_e = gather(p("entity_covariance"), h) + gather(p("entity_covariance"), t);
    return gaussian_similarity(mean_e, cov_e, gather(p("relation_mean"), r), gather(p("relation_covariance"), r),
                               spec().similarity);
  }

 protected:
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Index b = len(h), n = num_entities(), d = spec().embedding_dim;
    const Var mean_e = pairwise_difference(gather(p("entity_mean"), h), p("entity_mean"));
    const Var cov_e =
        reshape(gather(p("entity_covariance"), h), {b, 1, d}) + reshape(p("entity_covariance"), {1, n, d});
    return gaussian_similarity(mean_e, cov_e, reshape(gather(p("relation_mean"), r), {b, 1, d}),
                               reshape(gather(p("relation_covariance"), r), {b, 1, d}), spec().similarity);
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Index b = len(t), n = num_entities(), d = spec().embedding_dim;
    const Var mean_e = -pairwise_difference(gather(p("entity_mean"), t), p("entity_mean"));
    const Var cov_e =
        reshape(gather(p("entity_covariance"), t), {b, 1, d}) + reshape(p("entity_covariance"), {1, n, d});
    return gaussian_similarity(mean_e, cov_e, reshape(gather(p("relation_mean"), r), {b, 1, d}),
                               reshape(gather(p("relation_covariance"), r), {b, 1, d}), spec().similarity);
  }
};

class ERMLP final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, k = spec().resolved_hidden();
    return {table("entity", num_entities(), d),
            table("relation", num_relations(), d),
            xavier("hidden_weight", {k, 3 * d}, static_cast<double>(3 * d), static_cast<double>(k)),
            constant_param("hidden_bias", {k}, 0.0),
            xavier("output_weight", {k}, static_cast<double>(k), 1.0),
            constant_param("output_bias", {1}, 0.0)};
  }

  /// wᵀ g(W [h; r; t] + b) + b_out.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Var x = concat({gather(p("entity"), h), gather(p("relation"), r), gather(p("entity"), t)}, -1);
    const Var hidden = activate(spec().inner_activation, matmul(x, transpose(p("hidden_weight"))) + p("hidden_bias"));
    return rowdot(hidden, p("output_weight")) + p("output_bias");
  }

 protected:
  Var block(Binding& p, Index which) const {
    const Index d = spec().embedding_dim;
    return slice(p("hidden_weight"), -1, which * d, (which + 1) * d);
  }
  Var dense(Binding& p, Var fixed, Var all) const {
    const Index b = fixed.dim(0), n = all.dim(0), k = spec().resolved_hidden();
    const Var pre = reshape(fixed + p("hidden_bias"), {b, 1, k}) + reshape(all, {1, n, k});
    return rowdot(activate(spec().inner_activation, pre), p("output_weight")) + p("output_bias");
  }
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Var fixed = matmul(gather(p("entity"), h), transpose(block(p, 0))) +
                      matmul(gather(p("relation"), r), transpose(block(p, 1)));
    return dense(p, fixed, matmul(p("entity"), transpose(block(p, 2))));
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Var fixed = matmul(gather(p("relation"), r), transpose(block(p, 1))) +
                      matmul(gather(p("entity"), t), transpose(block(p, 2)));
    return dense(p, fixed, matmul(p("entity"), transpose(block(p, 0))));
  }
};

class NTN final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, k = spec().resolved_hidden(), r = num_relations();
    return {table("entity", num_entities(), d),
            xavier("bilinear", {r, k, d, d}, static_cast<double>(d), static_cast<double>(d)),
            xavier("linear", {r, k, 2 * d}, static_cast<double>(2 * d), static_cast<double>(k)),
            constant_param("bias", {r, k}, 0.0),
            xavier("output", {r, k}, static_cast<double>(k), 1.0)};
  }

  /// u_rᵀ tanh(h 𝔚_r t + V_r [h; t] + b_r).
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Index b = len(h), d = spec().embedding_dim, k = spec().resolved_hidden();
    const Var hv = gather(p("entity"), h);
    const Var tv = gather(p("entity"), t);
    const Var wt = reshape(matvec(reshape(gather(p("bilinear"), r), {b, k * d, d}), tv), {b, k, d});
    const Var bilinear = sum(wt * reshape(hv, {b, 1, d}), -1);
    const Var linear = matvec(gather(p("linear"), r), concat({hv, tv}, -1));
    return rowdot(gather(p("output"), r), tanh(bilinear + linear + gather(p("bias"), r)));
  }

 protected:
  Var dense(Binding& p, const Ids& r, Var fixed_linear, Var bilinear_query, Var free_linear) const {
    const Index b = len(r), k = spec().resolved_hidden();
    const Var pre = apply_to_all(bilinear_query, p("entity")) + apply_to_all(free_linear, p("entity")) +
                    reshape(fixed_linear + gather(p("bias"), r), {b, 1, k});
    return sum(tanh(pre) * reshape(gather(p("output"), r), {b, 1, k}), -1);
  }
  Var score_tails_dense(Binding& p, const Ids& h, const Ids& r) const override {
    const Index b = len(h), d = spec().embedding_dim, k = spec().resolved_hidden();
    const Var hv = gather(p("entity"), h);
    const Var w = transpose(reshape(gather(p("bilinear"), r), {b * k, d, d}));
    const Var hw = reshape(matvec(reshape(w, {b, k * d, d}), hv), {b, k, d});
    const Var v = gather(p("linear"), r);
    return dense(p, r, matvec(slice(v, -1, 0, d), hv), hw, slice(v, -1, d, 2 * d));
  }
  Var score_heads_dense(Binding& p, const Ids& r, const Ids& t) const override {
    const Index b = len(t), d = spec().embedding_dim, k = spec().resolved_hidden();
    const Var tv = gather(p("entity"), t);
    const Var wt = reshape(matvec(reshape(gather(p("bilinear"), r), {b, k * d, d}), tv), {b, k, d});
    const Var v = gather(p("linear"), r);
    return dense(p, r, matvec(slice(v, -1, d, 2 * d), tv), wt, slice(v, -1, 0, d));
  }
};

class ConvKB final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, nf = spec().filters;
    return {table("entity", num_entities(), d),
            table("relation", num_relations(), d),
            xavier("filters", {nf, 3}, 3.0, static_cast<double>(nf)),
            constant_param("filter_bias", {nf}, 0.0),
            xavier("output_weight", {nf * d}, static_cast<double>(nf * d), 1.0),
            constant_param("output_bias", {1}, 0.0)};
  }

  /// [v_1; ...; v_τ] . w with v_i = relu(ω_i A + b_i), A = [h; r; t] ∈ R^{d×3}.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    const Index b = len(h), d = spec().embedding_dim, nf = spec().filters;
    const Var w = p("filters");
    auto column = [&](Var x, Index c) { return reshape(x, {b, 1, d}) * slice(w, -1, c, c + 1); };
    const Var pre = column(gather(p("entity"), h), 0) + column(gather(p("relation"), r), 1) +
                    column(gather(p("entity"), t), 2) + reshape(p("filter_bias"), {nf, 1});
    return rowdot(reshape(relu(pre), {b, nf * d}), p("output_weight")) + p("output_bias");
  }
};

class ConvE final : public Interaction {
 public:
  using Interaction::Interaction;

  std::vector<ParameterLayout> layout() const override {
    const Index d = spec().embedding_dim, nf = spec().filters;
    const Index kh = spec().kernel_height, kw = spec().kernel_width;
    const Index features = nf * out_height() * out_width();
    return {table("entity", num_entities(), d),
            table("relation", num_relations(), d),
            xavier("filters", {nf, 1, kh, kw}, static_cast<double>(kh * kw), static_cast<double>(nf * kh * kw)),
            constant_param("input_scale", {1}, 1.0),
            constant_param("input_shift", {1}, 0.0),
            constant_param("feature_scale", {nf}, 1.0),
            constant_param("feature_shift", {nf}, 0.0),
            xavier("projection", {features, d}, static_cast<double>(features), static_cast<double>(d)),
            constant_param("projection_bias", {d}, 0.0),
            constant_param("output_scale", {d}, 1.0),
            constant_param("output_shift", {d}, 0.0),
            constant_param("entity_bias", {num_entities()}, 0.0)};
  }

  /// e_{h,r} . t + b_t.
  Var score_triples(Binding& p, const Ids& h, const Ids& r, const Ids& t) const override {
    check_ids(h, r);
    check_ids(t, {});
    return rowdot(combine(p, h, r), gather(p("entity"), t)) + gather(p("entity_bias"), t);
  }

 protected:
  Index out_height() const { return spec().resolved_reshape_height() - spec().kernel_height + 1; }
  Index out_width() const { return spec().reshape_width() - spec().kernel_width + 1; }

  Var combine(Binding& p, const Ids& h, const Ids& r) const {
    const Index b = len(h), nf = spec().filters;
    const Index m = spec().resolved_reshape_height(), n = spec().reshape_width();
    const Var image = reshape(concat({reshape(gather(p("entity"), h), {b, m / 2, n}),
                                      reshape(gather(p("relation"), r), {b, m / 2, n})},
                                     1),
                              {b, 1, m, n});
    const Var x = image * p("input_scale") + p("input_shift");
    const Var maps = conv2d(x, p("filters")) * reshape(p("feature_scale"), {nf, 1, 1}) +
                     reshape(p("feature_shift"), {nf, 1, 1});
    const Var v = reshape(relu(maps), {b, nf * out_height() * out_width()});
    const Var e = matmul(v, p("projection")) + p("projection_bias");
    return relu(e * p("output_scale") + p("output_shift"));
  }
  std::optional<Factorization> factor_tails(Binding& p, const Ids& h, const Ids& r) const override {
    Factorization f{combine(p, h, r), p("entity")};
    f.candidate_bias = p("entity_bias");
    return f;
  }
};

}  // namespace

std::unique_ptr<Interaction> make_interaction(const InteractionSpec& spec, Index entities, Index relations) {
  spec.validate();
  if (entities <= 0 || relations <= 0) throw ConfigError("interaction: empty entity or relation vocabulary");
  switch (spec.kind) {
    case InteractionKind::kUM: return std::make_unique<UM>(spec, entities, relations);
    case InteractionKind::kSE: return std::make_unique<SE>(spec, entities, relations);
    case InteractionKind::kTransE: return std::make_unique<TransE>(spec, entities, relations);
    case InteractionKind::kTransH: return std::make_unique<TransH>(spec, entities, relations);
    case InteractionKind::kTransR: return std::make_unique<TransR>(spec, entities, relations);
    case InteractionKind::kTransD: return std::make_unique<TransD>(spec, entities, relations);
    case InteractionKind::kRESCAL: return std::make_unique<RESCAL>(spec, entities, relations);
    case InteractionKind::kDistMult: return std::make_unique<DistMult>(spec, entities, relations);
    case InteractionKind::kComplEx: return std::make_unique<ComplEx>(spec, entities, relations);
    case InteractionKind::kRotatE: return std::make_unique<RotatE>(spec, entities, relations);
    case InteractionKind::kSimplE: return std::make_unique<SimplE>(spec, entities, relations);
    case InteractionKind::kTuckER: return std::make_unique<TuckER>(spec, entities, relations);
    case InteractionKind::kProjE: return std::make_unique<ProjE>(spec, entities, relations);
    case InteractionKind::kHolE: return std::make_unique<HolE>(spec, entities, relations);
    case InteractionKind::kKG2E: return std::make_unique<KG2E>(spec, entities, relations);
    case InteractionKind::kERMLP: return std::make_unique<ERMLP>(spec, entities, relations);
    case InteractionKind::kNTN: return std::make_unique<NTN>(spec, entities, relations);
    case InteractionKind::kConvKB: return std::make_unique<ConvKB>(spec, entities, relations);
    case InteractionKind::kConvE: return std::make_unique<ConvE>(spec, entities, relations);
  }
  throw ConfigError("interaction: unsupported kind");
}

}  // namespace kge
