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

#include "kge/interactions.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "kge/error.hpp"
#include "kge/random.hpp"

namespace kge {

namespace {

struct KindName {
  InteractionKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 19> kKindNames{{
    {InteractionKind::kUM, "UM"},           {InteractionKind::kSE, "SE"},
    {InteractionKind::kTransE, "TransE"},   {InteractionKind::kTransH, "TransH"},
    {InteractionKind::kTransR, "TransR"},   {InteractionKind::kTransD, "TransD"},
    {InteractionKind::kRESCAL, "RESCAL"},   {InteractionKind::kDistMult, "DistMult"},
    {InteractionKind::kComplEx, "ComplEx"}, {InteractionKind::kRotatE, "RotatE"},
    {InteractionKind::kSimplE, "SimplE"},   {InteractionKind::kTuckER, "TuckER"},
    {InteractionKind::kProjE, "ProjE"},     {InteractionKind::kHolE, "HolE"},
    {InteractionKind::kKG2E, "KG2E"},       {InteractionKind::kERMLP, "ERMLP"},
    {InteractionKind::kNTN, "NTN"},         {InteractionKind::kConvKB, "ConvKB"},
    {InteractionKind::kConvE, "ConvE"},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("interaction: " + message);
}

}  // namespace

std::string_view interaction_name(InteractionKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

InteractionKind parse_interaction(std::string_view name) {
  const std::string key = lower(name);
  for (const auto& [k, n] : kKindNames) {
    if (lower(n) == key) return k;
  }
  if (key == "er-mlp") return InteractionKind::kERMLP;
  throw ConfigError("unknown interaction model '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  const std::string key = lower(name);
  if (key == "identity") return Activation::kIdentity;
  if (key == "sigmoid") return Activation::kSigmoid;
  if (key == "tanh") return Activation::kTanh;
  if (key == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kRelu: return relu(x);
  }
  return x;
}

Index InteractionSpec::resolved_hidden() const {
  if (hidden > 0) return hidden;
  return kind == InteractionKind::kNTN ? 4 : embedding_dim;
}

Index InteractionSpec::resolved_reshape_height() const {
  if (reshape_height > 0) return reshape_height;
  const Index total = 2 * embedding_dim;
  Index best = 2;
  for (Index m = 2; m <= total; m += 2) {
    if (total % m != 0) continue;
    const Index n = total / m;
    const Index gap = std::abs(m - n);
    const Index best_gap = std::abs(best - total / best);
    if (gap <= best_gap) best = m;
  }
  return best;
}

void InteractionSpec::validate() const {
  require(embedding_dim > 0, "embedding_dim must be positive, got " + std::to_string(embedding_dim));
  require(relation_dim >= 0, "relation_dim must be non-negative");
  require(hidden >= 0, "hidden must be non-negative");
  switch (kind) {
    case InteractionKind::kTransE:
      require(p == 1 || p == 2, "TransE p must be 1 or 2, got " + std::to_string(p));
      break;
    case InteractionKind::kKG2E:
      require(covariance_min > 0, "KG2E covariance_min must be positive");
      require(covariance_max >= covariance_min, "KG2E covariance_max must be >= covariance_min");
      break;
    case InteractionKind::kSimplE:
      require(simple_clamp > 0, "SimplE clamp must be positive");
      break;
    case InteractionKind::kConvKB:
      require(filters > 0, "ConvKB filters must be positive");
      break;
    case InteractionKind::kConvE: {
      require(filters > 0, "ConvE filters must be positive");
      require(kernel_height > 0 && kernel_width > 0, "ConvE kernel sizes must be positive");
      const Index m = resolved_reshape_height();
      require(m % 2 == 0, "ConvE reshape height must be even, got " + std::to_string(m));
      require((2 * embedding_dim) % m == 0,
              "ConvE reshape height " + std::to_string(m) + " does not divide 2d = " + std::to_string(2 * embedding_dim));
      const Index n = reshape_width();
      require(kernel_height <= m && kernel_width <= n, "ConvE kernel " + std::to_string(kernel_height) + "x" +
                                                           std::to_string(kernel_width) + " exceeds reshaped input " +
                                                           std::to_string(m) + "x" + std::to_string(n));
      break;
    }
    default: break;
  }
}

nlohmann::json InteractionSpec::to_json() const {
  return {
      {"kind", std::string(interaction_name(kind))},
      {"embedding_dim", embedding_dim},
      {"relation_dim", relation_dim},
      {"hidden", hidden},
      {"filters", filters},
      {"kernel_height", kernel_height},
      {"kernel_width", kernel_width},
      {"reshape_height", reshape_height},
      {"p", p},
      {"similarity", similarity == GaussianSimilarity::kKL ? "KL" : "EL"},
      {"covariance_min", covariance_min},
      {"covariance_max", covariance_max},
      {"simple_clamp", simple_clamp},
      {"outer_activation", std::string(activation_name(outer_activation))},
      {"inner_activation", std::string(activation_name(inner_activation))},
  };
}

InteractionSpec InteractionSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  static const std::array<std::string_view, 15> known{
      "kind",   "embedding_dim", "relation_dim",   "hidden",         "filters",      "kernel_height",
      "kernel_width", "reshape_height", "p",     "similarity",     "covariance_min", "covariance_max",
      "simple_clamp", "outer_activation", "inner_activation"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("model: unknown field '" + key + "'");
    }
  }
  InteractionSpec s;
  try {
    s.kind = parse_interaction(j.at("kind").get<std::string>());
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.relation_dim = j.value("relation_dim", s.relation_dim);
    s.hidden = j.value("hidden", s.hidden);
    s.filters = j.value("filters", s.filters);
    s.kernel_height = j.value("kernel_height", s.kernel_height);
    s.kernel_width = j.value("kernel_width", s.kernel_width);
    s.reshape_height = j.value("reshape_height", s.reshape_height);
    s.p = j.value("p", s.p);
    if (j.contains("similarity")) {
      const std::string sim = lower(j.at("similarity").get<std::string>());
      if (sim == "kl") {
        s.similarity = GaussianSimilarity::kKL;
      } else if (sim == "el" || sim == "expected_likelihood" || sim == "expected-likelihood") {
        s.similarity = GaussianSimilarity::kExpectedLikelihood;
      } else {
        throw ConfigError("model: unknown KG2E similarity '" + sim + "'");
      }
    }
    s.covariance_min = j.value("covariance_min", s.covariance_min);
    s.covariance_max = j.value("covariance_max", s.covariance_max);
    s.simple_clamp = j.value("simple_clamp", s.simple_clamp);
    if (j.contains("outer_activation")) s.outer_activation = parse_activation(j.at("outer_activation").get<std::string>());
    if (j.contains("inner_activation")) s.inner_activation = parse_activation(j.at("inner_activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  s.validate();
  return s;
}

double ParameterLayout::xavier_bound() const { return std::sqrt(6.0 / (fan_in + fan_out)); }

std::size_t ModelParameters::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].layout.name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

Index ModelParameters::scalar_count() const {
  Index n = 0;
  for (const Slot& s : slots_) n += s.value.size();
  return n;
}

bool operator==(const ModelParameters& a, const ModelParameters& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].layout.name != b[i].layout.name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

Binding::Binding(Graph& graph, const ModelParameters& params)
    : graph_(&graph), params_(&params), nodes_(params.size()) {}

Var Binding::slot(std::size_t index) {
  auto& node = nodes_.at(index);
  if (!node) node = graph_->parameter((*params_)[index].value);
  return {graph_, *node};
}

void Binding::bind(std::size_t index, Var value) {
  if (value.graph != graph_) throw std::invalid_argument("Binding::bind: node belongs to another graph");
  if (value.shape() != (*params_)[index].value.shape()) {
    throw ShapeError("Binding::bind: shape " + to_string(value.shape()) + " does not match parameter '" +
                     (*params_)[index].layout.name + "'");
  }
  nodes_.at(index) = value.id;
}

Var Binding::operator()(std::string_view name) { return slot(params_->index_of(name)); }

void Interaction::check_ids(const std::vector<Index>& entities, const std::vector<Index>& relations) const {
  for (Index e : entities) {
    if (e < 0 || e >= entities_) throw ShapeError("entity id " + std::to_string(e) + " out of range");
  }
  for (Index r : relations) {
    if (r < 0 || r >= relations_) throw ShapeError("relation id " + std::to_string(r) + " out of range");
  }
}

namespace {

Var finish(const Interaction::Factorization& f, Var raw) {
  using Post = Interaction::Factorization::Post;
  switch (f.post) {
    case Post::kIdentity: return raw;
    case Post::kSigmoid: return sigmoid(raw);
    case Post::kTanh: return tanh(raw);
    case Post::kRelu: return relu(raw);
    case Post::kNegSqrtNeg: return -sqrt(relu(-raw));
    case Post::kClamp: return clamp(raw, -f.clamp, f.clamp);
  }
  return raw;
}

Var all_pairs(const Interaction::Factorization& f) {
  const Index b = f.query.dim(0);
  const Index n = f.table.dim(0);
  Var raw = matmul(f.query, transpose(f.table));
  if (f.scale != 1.0) raw = raw * f.scale;
  if (f.query_bias) raw = raw + reshape(*f.query_bias, {b, 1});
  if (f.candidate_bias) raw = raw + reshape(*f.candidate_bias, {1, n});
  if (f.offset) raw = raw + *f.offset;
  return finish(f, raw);
}

Var selected_pairs(const Interaction::Factorization& f, const std::vector<Index>& rows,
                   const std::vector<Index>& candidates) {
  Var raw = gather_dot(f.query, f.table, rows, candidates);
  if (f.scale != 1.0) raw = raw * f.scale;
  if (f.query_bias) raw = raw + gather(*f.query_bias, rows);
  if (f.candidate_bias) raw = raw + gather(*f.candidate_bias, candidates);
  if (f.offset) raw = raw + *f.offset;
  return finish(f, raw);
}

void check_rows(const std::vector<Index>& rows, const std::vector<Index>& candidates, std::size_t batch) {
  if (rows.size() != candidates.size() || rows.empty()) {
    throw ShapeError("candidate scoring: rows and candidates must be non-empty and of equal length");
  }
  for (Index r : rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= batch) {
      throw ShapeError("candidate scoring: row " + std::to_string(r) + " out of range");
    }
  }
}

}  // namespace

Var Interaction::score_tails(Binding& p, const std::vector<Index>& heads, const std::vector<Index>& relations) const {
  if (heads.size() != relations.size() || heads.empty()) throw ShapeError("score_tails: batch size mismatch");
  check_ids(heads, relations);
  if (auto f = factor_tails(p, heads, relations)) return all_pairs(*f);
  return score_tails_dense(p, heads, relations);
}

Var Interaction::score_heads(Binding& p, const std::vector<Index>& relations, const std::vector<Index>& tails) const {
  if (tails.size() != relations.size() || tails.empty()) throw ShapeError("score_heads: batch size mismatch");
  check_ids(tails, relations);
  if (auto f = factor_heads(p, relations, tails)) return all_pairs(*f);
  return score_heads_dense(p, relations, tails);
}

Var Interaction::score_tail_candidates(Binding& p, const std::vector<Index>& heads,
                                       const std::vector<Index>& relations, const std::vector<Index>& rows,
                                       const std::vector<Index>& candidates) const {
  if (heads.size() != relations.size() || heads.empty()) throw ShapeError("score_tail_candidates: batch size mismatch");
  check_ids(heads, relations);
  check_ids(candidates, {});
  check_rows(rows, candidates, heads.size());
  if (auto f = factor_tails(p, heads, relations)) return selected_pairs(*f, rows, candidates);
  std::vector<Index> h(rows.size()), r(rows.size());
  for (std::size_t m = 0; m < rows.size(); ++m) {
    h[m] = heads[static_cast<std::size_t>(rows[m])];
    r[m] = relations[static_cast<std::size_t>(rows[m])];
  }
  return score_triples(p, h, r, candidates);
}

Var Interaction::score_head_candidates(Binding& p, const std::vector<Index>& relations,
                                       const std::vector<Index>& tails, const std::vector<Index>& rows,
                                       const std::vector<Index>& candidates) const {
  if (tails.size() != relations.size() || tails.empty()) throw ShapeError("score_head_candidates: batch size mismatch");
  check_ids(tails, relations);
  check_ids(candidates, {});
  check_rows(rows, candidates, tails.size());
  if (auto f = factor_heads(p, relations, tails)) return selected_pairs(*f, rows, candidates);
  std::vector<Index> r(rows.size()), t(rows.size());
  for (std::size_t m = 0; m < rows.size(); ++m) {
    r[m] = relations[static_cast<std::size_t>(rows[m])];
    t[m] = tails[static_cast<std::size_t>(rows[m])];
  }
  return score_triples(p, candidates, r, t);
}

Var Interaction::score_tails_dense(Binding& p, const std::vector<Index>& heads,
                                   const std::vector<Index>& relations) const {
  const auto b = static_cast<Index>(heads.size());
  std::vector<Index> h, r, t;
  h.reserve(static_cast<std::size_t>(b * entities_));
  r.reserve(h.capacity());
  t.reserve(h.capacity());
  for (Index i = 0; i < b; ++i) {
    for (Index e = 0; e < entities_; ++e) {
      h.push_back(heads[static_cast<std::size_t>(i)]);
      r.push_back(relations[static_cast<std::size_t>(i)]);
      t.push_back(e);
    }
  }
  return reshape(score_triples(p, h, r, t), {b, entities_});
}

Var Interaction::score_heads_dense(Binding& p, const std::vector<Index>& relations,
                                   const std::vector<Index>& tails) const {
  const auto b = static_cast<Index>(tails.size());
  std::vector<Index> h, r, t;
  h.reserve(static_cast<std::size_t>(b * entities_));
  r.reserve(h.capacity());
  t.reserve(h.capacity());
  for (Index i = 0; i < b; ++i) {
    for (Index e = 0; e < entities_; ++e) {
      h.push_back(e);
      r.push_back(relations[static_cast<std::size_t>(i)]);
      t.push_back(tails[static_cast<std::size_t>(i)]);
    }
  }
  return reshape(score_triples(p, h, r, t), {b, entities_});
}

Index parameter_count(const InteractionSpec& spec, Index entities, Index relations) {
  spec.validate();
  const Index e = entities, r = relations, d = spec.embedding_dim;
  const Index dr = spec.resolved_relation_dim();
  const Index k = spec.resolved_hidden();
  const Index nf = spec.filters;
  switch (spec.kind) {
    case InteractionKind::kUM: return e * d;
    case InteractionKind::kSE: return e * d + 2 * r * d * d;
    case InteractionKind::kTransE: return e * d + r * d;
    case InteractionKind::kTransH: return e * d + 2 * r * d;
    case InteractionKind::kTransR: return e * d + r * dr + r * d * dr;
    case InteractionKind::kTransD: return e * 2 * d + r * 2 * dr;
    case InteractionKind::kRESCAL: return e * d + r * d * d;
    case InteractionKind::kDistMult: return e * d + r * d;
    case InteractionKind::kComplEx: return e * 2 * d + r * 2 * d;
    case InteractionKind::kRotatE: return e * 2 * d + r * d;
    case InteractionKind::kSimplE: return 2 * e * d + 2 * r * d;
    case InteractionKind::kTuckER: return e * d + r * dr + d * d * dr + 4 * d;
    case InteractionKind::kProjE: return e * d + r * d + 3 * d + 1;
    case InteractionKind::kHolE: return e * d + r * d;
    case InteractionKind::kKG2E: return 2 * e * d + 2 * r * d;
    case InteractionKind::kERMLP: return e * d + r * d + k * (3 * d + 2) + 1;
    case InteractionKind::kNTN: return e * d + r * k * (d * d + 2 * d + 2);
    case InteractionKind::kConvKB: return e * d + r * d + nf * (d + 4) + 1;
    case InteractionKind::kConvE: {
      const Index h = spec.resolved_reshape_height(), w = spec.reshape_width();
      const Index kr = spec.kernel_height, kc = spec.kernel_width;
      return e * d + r * d + d + nf * kr * kc + 2 + 2 * nf + 2 * d + (h - kr + 1) * (w - kc + 1) * nf * d + e;
    }
  }
  return 0;
}

ModelParameters init_parameters(const InteractionSpec& spec, Index entities, Index relations, std::uint64_t seed) {
  spec.validate();
  if (entities <= 0 || relations <= 0) throw ConfigError("interaction: empty entity or relation vocabulary");
  const auto interaction = make_interaction(spec, entities, relations);
  Rng rng(derive_seed(seed, seed_stage::kInit));
  std::vector<ModelParameters::Slot> slots;
  for (ParameterLayout& layout : interaction->layout()) {
    Tensor value(layout.shape);
    auto& data = value.data();
    switch (layout.init) {
      case InitKind::kXavier: {
        const double bound = layout.xavier_bound();
        for (Index i = 0; i < value.size(); ++i) data[i] = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::kConstant: data.setConstant(layout.constant); break;
      case InitKind::kPhase:
        for (Index i = 0; i < value.size(); ++i) data[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        break;
    }
    slots.push_back({std::move(layout), std::move(value)});
  }
  return ModelParameters(std::move(slots));
}

Model::Model(const InteractionSpec& spec, Index entities, Index relations, std::uint64_t seed)
    : interaction_(make_interaction(spec, entities, relations)),
      params_(init_parameters(spec, entities, relations, seed)) {}

Model::Model(const InteractionSpec& spec, Index entities, Index relations, ModelParameters params)
    : interaction_(make_interaction(spec, entities, relations)), params_(std::move(params)) {
  const auto layout = interaction_->layout();
  if (layout.size() != params_.size()) throw ShapeError("model parameters do not match the interaction layout");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params_[i].layout.name || layout[i].shape != params_[i].value.shape()) {
      throw ShapeError("parameter '" + layout[i].name + "' expected shape " + to_string(layout[i].shape) + ", got " +
                       to_string(params_[i].value.shape()));
    }
  }
}

Model::Model(const Model& other) = default;
Model& Model::operator=(const Model& other) = default;

Var Model::score(Binding& p, const Triple& t) const {
  return reshape(interaction_->score_triples(p, {t.head}, {t.relation}, {t.tail}), {});
}

void Model::project() {
  for (auto& slot : params_) {
    if (!slot.layout.covariance) continue;
    auto& data = slot.value.data();
    data = data.cwiseMax(spec().covariance_min).cwiseMin(spec().covariance_max);
  }
}

Tensor circular_correlation(const Tensor& a, const Tensor& b) {
  Graph g;
  return circular_correlation(constant(g, a), constant(g, b)).value();
}

Var gaussian_similarity(Var mean_e, Var cov_e, Var mean_r, Var cov_r, GaussianSimilarity mode) {
  if ((cov_e.value().data().array() <= 0).any() || (cov_r.value().data().array() <= 0).any()) {
    throw std::domain_error("gaussian_similarity: non-positive variance");
  }
  const Var diff = mean_e - mean_r;
  if (mode == GaussianSimilarity::kKL) {
    const Var terms = cov_e / cov_r + square(diff) / cov_r - log(cov_e) + log(cov_r) - 1.0;
    return -0.5 * sum(terms, -1);
  }
  const Var total = cov_e + cov_r;
  const Var terms = square(diff) / total + log(total) + std::log(2.0 * std::numbers::pi);
  return -0.5 * sum(terms, -1);
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!in) throw DataError("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
  return v;
}

void write_f64(std::ostream& out, const Tensor& t) {
  std::vector<char> buf(static_cast<std::size_t>(t.size()) * 8);
  for (Index i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(t[i]);
    for (int b = 0; b < 8; ++b) buf[static_cast<std::size_t>(i * 8 + b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, bool inverse_relations,
                     std::uint64_t seed) {
  nlohmann::json header;
  header["format"] = "kge-checkpoint-1";
  header["model"] = model.spec().to_json();
  header["num_entities"] = model.num_entities();
  header["num_relations"] = model.num_relations();
  header["inverse_relations"] = inverse_relations;
  header["seed"] = seed;
  nlohmann::json tensors = nlohmann::json::array();
  Index offset = 0;
  for (const auto& slot : model.parameters()) {
    tensors.push_back({{"name", slot.layout.name}, {"shape", slot.value.shape()}, {"offset", offset},
                       {"count", slot.value.size()}});
    offset += slot.value.size();
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& slot : model.parameters()) write_f64(out, slot.value);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::pair<CheckpointHeader, Model> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::uint64_t length = read_u64(in);
  if (length > (1ULL << 30)) throw DataError("checkpoint: implausible header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  CheckpointHeader h;
  h.spec = InteractionSpec::from_json(header.at("model"));
  h.num_entities = header.at("num_entities").get<Index>();
  h.num_relations = header.at("num_relations").get<Index>();
  h.inverse_relations = header.at("inverse_relations").get<bool>();
  h.seed = header.at("seed").get<std::uint64_t>();

  const auto interaction = make_interaction(h.spec, h.num_entities, h.num_relations);
  const auto layout = interaction->layout();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != layout.size()) throw DataError("checkpoint: tensor count does not match the model");
  std::vector<ModelParameters::Slot> slots;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Shape shape = tensors[i].at("shape").get<Shape>();
    if (tensors[i].at("name").get<std::string>() != layout[i].name || shape != layout[i].shape) {
      throw DataError("checkpoint: tensor '" + layout[i].name + "' does not match the model");
    }
    Tensor value(shape);
    std::vector<unsigned char> buf(static_cast<std::size_t>(value.size()) * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw DataError("checkpoint: truncated tensor '" + layout[i].name + "'");
    for (Index j = 0; j < value.size(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | buf[static_cast<std::size_t>(j * 8 + b)];
      value[j] = std::bit_cast<double>(bits);
    }
    slots.push_back({layout[i], std::move(value)});
  }
  Model model(h.spec, h.num_entities, h.num_relations, ModelParameters(std::move(slots)));
  return {std::move(h), std::move(model)};
}

}  // namespace kge
