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
#include <string_view>

#include <json.hpp>

#include "kge/graph.hpp"

namespace kge {

enum class LossKind : std::uint8_t {
  kSquareError,
  kBCEL,
  kSPL,
  kPointwiseHinge,
  kMRL,
  kPairwiseLogistic,
  kNSSAL,
  kCEL,
};

inline constexpr std::array<LossKind, 8> kAllLosses{LossKind::kSquareError,    LossKind::kBCEL, LossKind::kSPL,
                                                    LossKind::kPointwiseHinge, LossKind::kMRL,  LossKind::kPairwiseLogistic,
                                                    LossKind::kNSSAL,          LossKind::kCEL};

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

bool is_pointwise(LossKind kind);
bool is_pairwise(LossKind kind);
/// Pointwise kinds whose labels live in [-1, 1] (SPL, hinge) rather than [0, 1].
bool uses_signed_labels(LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::kBCEL;
  /// λ for the pointwise hinge and MRL.
  double margin = 1.0;
  /// γ and α of the self-adversarial loss.
  double adversarial_margin = 9.0;
  double adversarial_temperature = 1.0;
  /// ε; applies to labels under the LCWA and to the CEL target.
  double label_smoothing = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static LossSpec from_json(const nlohmann::json& j);

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Mean over all entries of the pointwise loss. `labels` matches `scores`
/// in shape; [0, 1] for square error and BCEL, [-1, 1] for SPL and hinge.
Var pointwise_loss(LossKind kind, Var scores, const Tensor& labels, double margin = 1.0);

/// Mean over pairs of max(0, λ + Δ) (MRL) or softplus(Δ), Δ = f⁻ - f⁺.
Var pairwise_loss(LossKind kind, Var positive, Var negative, double margin = 1.0);

/// Self-adversarial loss; positive [B], negative [B, K]. The softmax
/// weights over negatives are constants. Mean over B.
Var nssal(Var positive, Var negative, double temperature, double margin);

/// softmax(α · negative) along the last axis, as plain values.
Tensor adversarial_weights(const Tensor& negative, double temperature);

/// NSSAL with caller-supplied negative weights [B, K].
Var weighted_nssal(Var positive, Var negative, const Tensor& weights, double margin);

/// Cross entropy between target distributions (rows sum to 1) and
/// softmax(scores) along the last axis; mean over rows.
Var cross_entropy(Var scores, const Tensor& distribution);

/// CEL from 0/1 indicator labels: smoothed by ε, renormalized, then cross entropy.
Var cel(Var scores, const Tensor& labels, double label_smoothing = 0.0);

enum class LabelConvention : std::uint8_t {
  /// 1 -> 1 - ε, 0 -> ε / (n - 1) per entry.
  kBinary,
  /// Binary smoothing followed by row normalization to a distribution.
  kDistribution,
};

/// Smooths 0/1 labels along the last axis of size n.
Tensor smooth_labels(const Tensor& labels, double label_smoothing, LabelConvention convention);

}  // namespace kge
