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

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kge/graph.hpp"
#include "kge/triples.hpp"

namespace kge {

enum class InteractionKind : std::uint8_t {
  kUM,
  kSE,
  kTransE,
  kTransH,
  kTransR,
  kTransD,
  kRESCAL,
  kDistMult,
  kComplEx,
  kRotatE,
  kSimplE,
  kTuckER,
  kProjE,
  kHolE,
  kKG2E,
  kERMLP,
  kNTN,
  kConvKB,
  kConvE,
};

inline constexpr std::array<InteractionKind, 19> kAllInteractions{
    InteractionKind::kUM,      InteractionKind::kSE,     InteractionKind::kTransE, InteractionKind::kTransH,
    InteractionKind::kTransR,  InteractionKind::kTransD, InteractionKind::kRESCAL, InteractionKind::kDistMult,
    InteractionKind::kComplEx, InteractionKind::kRotatE, InteractionKind::kSimplE, InteractionKind::kTuckER,
    InteractionKind::kProjE,   InteractionKind::kHolE,   InteractionKind::kKG2E,   InteractionKind::kERMLP,
    InteractionKind::kNTN,     InteractionKind::kConvKB, InteractionKind::kConvE,
};

std::string_view interaction_name(InteractionKind kind);
InteractionKind parse_interaction(std::string_view name);

enum class GaussianSimilarity : std::uint8_t { kKL, kExpectedLikelihood };

enum class Activation : std::uint8_t { kIdentity, kSigmoid, kTanh, kRelu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);
Var activate(Activation a, Var x);

struct InteractionSpec {
  InteractionKind kind = InteractionKind::kTransE;
  /// d (entity dimension d_e for TransR/TuckER).
  Index embedding_dim = 64;
  /// d_r for TransR/TuckER, k for TransD; 0 means "same as embedding_dim".
  Index relation_dim = 0;
  /// ERMLP hidden units / NTN tensor slices; 0 selects the kind's default.
  Index hidden = 0;
  /// ConvKB/ConvE filter count τ.
  Index filters = 32;
  Index kernel_height = 3;
  Index kernel_width = 3;
  /// ConvE reshape height m (must be even, m*n == 2d); 0 picks the most square layout.
  Index reshape_height = 0;
  /// TransE norm order.
  int p = 1;
  GaussianSimilarity similarity = GaussianSimilarity::kKL;
  double covariance_min = 0.05;
  double covariance_max = 5.0;
  /// SimplE scores are clamped to [-clamp, clamp].
  double simple_clamp = 20.0;
  /// ProjE f = g(t . z(h ⊗ r) + b_p) with g = outer, z = inner; ERMLP uses `inner`.
  Activation outer_activation = Activation::kSigmoid;
  Activation inner_activation = Activation::kTanh;

  Index resolved_relation_dim() const { return relation_dim > 0 ? relation_dim : embedding_dim; }
  Index resolved_hidden() const;
  Index resolved_reshape_height() const;
  Index reshape_width() const { return 2 * embedding_dim / resolved_reshape_height(); }

  /// Throws ConfigError with the offending field.
  void validate() const;

  nlohmann::json to_json() const;
  static InteractionSpec from_json(const nlohmann::json& j);

  friend bool operator==(const InteractionSpec&, const InteractionSpec&) = default;
};

enum class InitKind : std::uint8_t { kXavier, kConstant, kPhase };

struct ParameterLayout {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kXavier;
  double fan_in = 1;
  double fan_out = 1;
  double constant = 0;
  /// Entries are kept inside [covariance_min, covariance_max] after every step.
  bool covariance = false;

  double xavier_bound() const;
};

/// Named trainable tensors of one model, in layout order.
class ModelParameters {
 public:
  struct Slot {
    ParameterLayout layout;
    Tensor value;
  };

  ModelParameters() = default;
  explicit ModelParameters(std::vector<Slot> slots) : slots_(std::move(slots)) {}

  std::size_t size() const { return slots_.size(); }
  Slot& operator[](std::size_t i) { return slots_[i]; }
  const Slot& operator[](std::size_t i) const { return slots_[i]; }
  std::size_t index_of(std::string_view name) const;
  Tensor& at(std::string_view name) { return slots_[index_of(name)].value; }
  const Tensor& at(std::string_view name) const { return slots_[index_of(name)].value; }
  Index scalar_count() const;

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

  friend bool operator==(const ModelParameters& a, const ModelParameters& b);

 private:
  std::vector<Slot> slots_;
};

/// Parameter leaves of one model inside one graph, created on first use.
class Binding {
 public:
  Binding(Graph& graph, const ModelParameters& params);

  Graph& graph() const { return *graph_; }
  Var operator()(std::string_view name);
  Var slot(std::size_t index);
  /// Substitutes an existing node of the same graph for a parameter.
  void bind(std::size_t index, Var value);
  std::optional<NodeId> node(std::size_t index) const { return nodes_.at(index); }
  const ModelParameters& parameters() const { return *params_; }

 private:
  Graph* graph_;
  const ModelParameters* params_;
  std::vector<std::optional<NodeId>> nodes_;
};

/// Batched scoring for one interaction kind. Implementations are stateless
/// apart from the spec and vocabulary sizes. Higher scores mean more plausible.
class Interaction {
 public:
  Interaction(InteractionSpec spec, Index entities, Index relations)
      : spec_(std::move(spec)), entities_(entities), relations_(relations) {}
  virtual ~Interaction() = default;

  const InteractionSpec& spec() const { return spec_; }
  Index num_entities() const { return entities_; }
  Index num_relations() const { return relations_; }

  virtual std::vector<ParameterLayout> layout() const = 0;

  /// Direct transcription of the scoring equation; returns shape [B].
  virtual Var score_triples(Binding& p, const std::vector<Index>& heads, const std::vector<Index>& relations,
                            const std::vector<Index>& tails) const = 0;

  /// Scores against every entity; shape [B, |E|].
  Var score_tails(Binding& p, const std::vector<Index>& heads, const std::vector<Index>& relations) const;
  Var score_heads(Binding& p, const std::vector<Index>& relations, const std::vector<Index>& tails) const;

  /// Scores (h[rows[m]], r[rows[m]], candidates[m]) for m < M; shape [M].
  Var score_tail_candidates(Binding& p, const std::vector<Index>& heads, const std::vector<Index>& relations,
                            const std::vector<Index>& rows, const std::vector<Index>& candidates) const;
  /// Scores (candidates[m], r[rows[m]], t[rows[m]]); shape [M].
  Var score_head_candidates(Binding& p, const std::vector<Index>& relations, const std::vector<Index>& tails,
                            const std::vector<Index>& rows, const std::vector<Index>& candidates) const;

  /// Score written as post(scale * <query_b, table_e> + query_bias_b + candidate_bias_e + offset).
  struct Factorization {
    enum class Post : std::uint8_t { kIdentity, kSigmoid, kTanh, kRelu, kNegSqrtNeg, kClamp };
    Var query;
    Var table;
    double scale = 1.0;
    std::optional<Var> query_bias;
    std::optional<Var> candidate_bias;
    std::optional<Var> offset;
    Post post = Post::kIdentity;
    double clamp = 0.0;
  };

 protected:
  /// Models whose score is a dot product in the free entity return a factorization.
  virtual std::optional<Factorization> factor_tails(Binding&, const std::vector<Index>&,
                                                    const std::vector<Index>&) const {
    return std::nullopt;
  }
  virtual std::optional<Factorization> factor_heads(Binding&, const std::vector<Index>&,
                                                    const std::vector<Index>&) const {
    return std::nullopt;
  }
  /// 1-N scoring for models without a factorization; the default expands to triples.
  virtual Var score_tails_dense(Binding& p, const std::vector<Index>& heads, const std::vector<Index>& relations) const;
  virtual Var score_heads_dense(Binding& p, const std::vector<Index>& relations, const std::vector<Index>& tails) const;

  void check_ids(const std::vector<Index>& entities, const std::vector<Index>& relations) const;

 private:
  InteractionSpec spec_;
  Index entities_;
  Index relations_;
};

std::unique_ptr<Interaction> make_interaction(const InteractionSpec& spec, Index entities, Index relations);

/// Closed-form parameter count per interaction kind.
Index parameter_count(const InteractionSpec& spec, Index entities, Index relations);

/// Xavier-uniform tensors (bound sqrt(6 / (fan_in + fan_out))), KG2E covariances
/// at the midpoint of their bounds, RotatE phases uniform in [0, 2π).
ModelParameters init_parameters(const InteractionSpec& spec, Index entities, Index relations, std::uint64_t seed);

/// An interaction together with its parameters.
class Model {
 public:
  Model(const InteractionSpec& spec, Index entities, Index relations, std::uint64_t seed);
  Model(const InteractionSpec& spec, Index entities, Index relations, ModelParameters params);

  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const InteractionSpec& spec() const { return interaction_->spec(); }
  const Interaction& interaction() const { return *interaction_; }
  Index num_entities() const { return interaction_->num_entities(); }
  Index num_relations() const { return interaction_->num_relations(); }
  ModelParameters& parameters() { return params_; }
  const ModelParameters& parameters() const { return params_; }

  /// Scalar score node of one triple.
  Var score(Binding& p, const Triple& t) const;

  /// Post-step constraints (KG2E covariance bounds).
  void project();

 private:
  std::shared_ptr<const Interaction> interaction_;
  ModelParameters params_;
};

/// [a ⋆ b]_i = sum_k a_k b_{(i+k) mod d} on plain vectors.
Tensor circular_correlation(const Tensor& a, const Tensor& b);

/// Higher-is-better similarity of diagonal Gaussians over the last axis:
/// negated KL(P_e || P_r), or the negated log expected-likelihood expression.
Var gaussian_similarity(Var mean_e, Var cov_e, Var mean_r, Var cov_r, GaussianSimilarity mode);

struct CheckpointHeader {
  InteractionSpec spec;
  Index num_entities = 0;
  Index num_relations = 0;
  bool inverse_relations = false;
  std::uint64_t seed = 0;
};

/// 8-byte little-endian header length, the JSON header, then each tensor as
/// little-endian f64 in layout order.
void save_checkpoint(const std::filesystem::path& path, const Model& model, bool inverse_relations,
                     std::uint64_t seed);
std::pair<CheckpointHeader, Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace kge
