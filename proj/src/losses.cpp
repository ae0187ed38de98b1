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

#include "kge/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "kge/error.hpp"

namespace kge {

namespace {

struct LossName {
  LossKind kind;
  std::string_view name;
};

constexpr std::array<LossName, 8> kLossNames{{
    {LossKind::kSquareError, "SE"},
    {LossKind::kBCEL, "BCEL"},
    {LossKind::kSPL, "SPL"},
    {LossKind::kPointwiseHinge, "HL"},
    {LossKind::kMRL, "MRL"},
    {LossKind::kPairwiseLogistic, "PLL"},
    {LossKind::kNSSAL, "NSSAL"},
    {LossKind::kCEL, "CEL"},
}};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

void check_labels(LossKind kind, const Tensor& labels) {
  const double lo = uses_signed_labels(kind) ? -1.0 : 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (!(labels[i] >= lo && labels[i] <= 1.0)) {
      throw std::domain_error(std::string(loss_name(kind)) + ": label " + std::to_string(labels[i]) +
                              " outside [" + std::to_string(lo) + ", 1]");
    }
  }
}

}  // namespace

std::string_view loss_name(LossKind kind) {
  for (const auto& [k, name] : kLossNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LossKind parse_loss(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& [k, n] : kLossNames) {
    if (n == key) return k;
  }
  if (key == "SQUARE_ERROR" || key == "SQUARE-ERROR" || key == "MSE") return LossKind::kSquareError;
  if (key == "HINGE" || key == "POINTWISE_HINGE" || key == "POINTWISE-HINGE") return LossKind::kPointwiseHinge;
  if (key == "PAIRWISE_HINGE" || key == "PAIRWISE-HINGE" || key == "MARGIN_RANKING") return LossKind::kMRL;
  if (key == "PAIRWISE_LOGISTIC" || key == "PAIRWISE-LOGISTIC" || key == "SOFTPLUS_PAIRWISE") {
    return LossKind::kPairwiseLogistic;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

bool is_pointwise(LossKind kind) {
  return kind == LossKind::kSquareError || kind == LossKind::kBCEL || kind == LossKind::kSPL ||
         kind == LossKind::kPointwiseHinge;
}

bool is_pairwise(LossKind kind) { return kind == LossKind::kMRL || kind == LossKind::kPairwiseLogistic; }

bool uses_signed_labels(LossKind kind) { return kind == LossKind::kSPL || kind == LossKind::kPointwiseHinge; }

void LossSpec::validate() const {
  if (!(margin >= 0)) throw ConfigError("loss: margin must be >= 0");
  if (!(adversarial_temperature > 0)) throw ConfigError("loss: adversarial temperature must be > 0");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw ConfigError("loss: label smoothing must lie in [0, 1)");
  if (!std::isfinite(adversarial_margin)) throw ConfigError("loss: adversarial margin must be finite");
}

nlohmann::json LossSpec::to_json() const {
  return {{"kind", std::string(loss_name(kind))},
          {"margin", margin},
          {"adversarial_margin", adversarial_margin},
          {"adversarial_temperature", adversarial_temperature},
          {"label_smoothing", label_smoothing}};
}

LossSpec LossSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("loss: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "margin" && key != "adversarial_margin" && key != "adversarial_temperature" &&
        key != "label_smoothing") {
      throw ConfigError("loss: unknown field '" + key + "'");
    }
  }
  LossSpec s;
  try {
    s.kind = parse_loss(j.at("kind").get<std::string>());
    s.margin = j.value("margin", s.margin);
    s.adversarial_margin = j.value("adversarial_margin", s.adversarial_margin);
    s.adversarial_temperature = j.value("adversarial_temperature", s.adversarial_temperature);
    s.label_smoothing = j.value("label_smoothing", s.label_smoothing);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
  s.validate();
  return s;
}

Var pointwise_loss(LossKind kind, Var scores, const Tensor& labels, double margin) {
  if (!is_pointwise(kind)) throw std::invalid_argument(std::string(loss_name(kind)) + " is not a pointwise loss");
  if (labels.shape() != scores.shape()) {
    throw ShapeError(std::string(loss_name(kind)) + ": labels " + to_string(labels.shape()) + " vs scores " +
                     to_string(scores.shape()));
  }
  check_labels(kind, labels);
  Graph& g = *scores.graph;
  const Var l = constant(g, labels);
  switch (kind) {
    case LossKind::kSquareError: return 0.5 * mean(square(scores - l));
    // -(l log σ(s) + (1 - l) log(1 - σ(s))) = softplus(s) - l s
    case LossKind::kBCEL: return mean(softplus(scores) - l * scores);
    case LossKind::kSPL: return mean(softplus(-(l * scores)));
    case LossKind::kPointwiseHinge: return mean(relu(margin - l * scores));
    default: break;
  }
  throw std::logic_error("unreachable");
}

Var pairwise_loss(LossKind kind, Var positive, Var negative, double margin) {
  if (!is_pairwise(kind)) throw std::invalid_argument(std::string(loss_name(kind)) + " is not a pairwise loss");
  if (positive.shape() != negative.shape()) {
    throw ShapeError(std::string(loss_name(kind)) + ": positive " + to_string(positive.shape()) + " vs negative " +
                     to_string(negative.shape()));
  }
  const Var delta = negative - positive;
  return kind == LossKind::kMRL ? mean(relu(delta + margin)) : mean(softplus(delta));
}

Tensor adversarial_weights(const Tensor& negative, double temperature) {
  Graph g;
  return softmax(temperature * constant(g, negative)).value();
}

Var weighted_nssal(Var positive, Var negative, const Tensor& weights, double margin) {
  if (negative.value().rank() != 2 || positive.value().rank() != 1 || positive.dim(0) != negative.dim(0)) {
    throw ShapeError("NSSAL: expected positive [B] and negative [B, K], got " + to_string(positive.shape()) + " and " +
                     to_string(negative.shape()));
  }
  if (weights.shape() != negative.shape()) {
    throw ShapeError("NSSAL: weights " + to_string(weights.shape()) + " vs negative " + to_string(negative.shape()));
  }
  Graph& g = *negative.graph;
  const Var pos_term = -log_sigmoid(positive + margin);
  const Var neg_term = -sum(constant(g, weights) * log_sigmoid(-(negative + margin)), -1);
  return mean(pos_term + neg_term);
}

Var nssal(Var positive, Var negative, double temperature, double margin) {
  if (!(temperature > 0)) throw std::domain_error("NSSAL: temperature must be > 0");
  if (negative.value().rank() != 2) {
    throw ShapeError("NSSAL: expected negative [B, K], got " + to_string(negative.shape()));
  }
  return weighted_nssal(positive, negative, adversarial_weights(negative.value(), temperature), margin);
}

Var cross_entropy(Var scores, const Tensor& distribution) {
  if (distribution.shape() != scores.shape()) {
    throw ShapeError("CEL: labels " + to_string(distribution.shape()) + " vs scores " + to_string(scores.shape()));
  }
  Graph& g = *scores.graph;
  const Index n = scores.dim(-1);
  const Index rows = scores.value().size() / n;
  return -(1.0 / static_cast<double>(rows)) * sum(constant(g, distribution) * log_softmax(scores));
}

Tensor smooth_labels(const Tensor& labels, double label_smoothing, LabelConvention convention) {
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw std::domain_error("label smoothing must lie in [0, 1)");
  const Index n = labels.dim(-1);
  Tensor out = labels;
  auto m = out.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    double positives = 0;
    for (Index c = 0; c < n; ++c) {
      const double l = m(r, c);
      if (l != 0.0 && l != 1.0) throw std::domain_error("smooth_labels: expected 0/1 labels");
      positives += l;
      if (label_smoothing > 0 && n > 1) m(r, c) = l == 1.0 ? 1.0 - label_smoothing : label_smoothing / static_cast<double>(n - 1);
    }
    if (convention == LabelConvention::kDistribution) {
      if (positives == 0) throw std::domain_error("CEL: every row needs at least one positive label");
      m.row(r) /= m.row(r).sum();
    }
  }
  return out;
}

Var cel(Var scores, const Tensor& labels, double label_smoothing) {
  if (labels.shape() != scores.shape()) {
    throw ShapeError("CEL: labels " + to_string(labels.shape()) + " vs scores " + to_string(scores.shape()));
  }
  return cross_entropy(scores, smooth_labels(labels, label_smoothing, LabelConvention::kDistribution));
}

}  // namespace kge
