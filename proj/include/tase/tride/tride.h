#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tase/tride/params.h"

// Three-component disentanglement of token features:
//
//   Xh = LN(Proj(X + FFN(X)))
//   C_c = CrossAttn(Xh, V_c)              c in {O, A, R}
//   S = Xh + sum_c C_c
//   E = pool(S + FFN(LN(S)))
//
// The residual paths make the module a pass-through when the FFN and
// attention weights are zero.
namespace tase::tride {

enum class Placement { kNone, kTokenLevel, kAfterPooling };
enum class AttentionVariant { kSelf, kLearnableQuery, kLearnableKeyValue };
enum class InitScheme { kIdentity, kUniform };

const char* placement_name(Placement p);
const char* attention_name(AttentionVariant a);
const char* init_name(InitScheme i);
Placement parse_placement(const std::string& s);
AttentionVariant parse_attention(const std::string& s);
InitScheme parse_init(const std::string& s);

inline constexpr std::array<const char*, 3> kComponentNames{"O", "A", "R"};

struct TriDeConfig {
  std::size_t d_model = 32;
  std::size_t dim = 32;  // D
  std::size_t heads = 2;
  std::size_t slots = 4;  // rows of each learnable vector set
  std::size_t ffn_hidden = 64;
  int components = 3;
  Placement placement = Placement::kTokenLevel;
  AttentionVariant attention = AttentionVariant::kLearnableKeyValue;
  InitScheme init = InitScheme::kIdentity;
  double ln_eps = 1e-5;
  std::uint64_t seed = 2;

  void validate() const;
  // Components actually produced; zero when placement is kNone.
  int active_components() const { return placement == Placement::kNone ? 0 : components; }
};

// Registers every TriDe parameter under the "tride." prefix.
void init_tride(const TriDeConfig& config, ParamStore& store);

// Per-sentence component outputs. tokens[c] is T x D (or 1 x D after
// pooling); pooled[c] is the unit-normalized mean over its rows.
struct ComponentTriple {
  std::vector<Var> tokens;
  std::vector<Var> pooled;

  std::size_t count() const { return pooled.size(); }
};

struct TriDeOutput {
  ComponentTriple components;
  Var embedding;  // E, length D
};

TriDeOutput tride_forward(Binder& b, const TriDeConfig& config, Var x);

// Multi-head attention of query rows over key/value rows with a single
// shared key/value projection: Softmax(Q Wq (K Wkv)^T / sqrt(d_k)) K Wkv.
Var cross_attention(Var q, Var kv, Var wq, Var wkv, std::size_t heads);

struct AttentionResult {
  Tensor output;
  std::vector<Tensor> weights;  // one row-stochastic matrix per head
};
AttentionResult cross_attention(const Tensor& q, const Tensor& kv, const Tensor& wq, const Tensor& wkv,
                                std::size_t heads);

// Component terms of one chain: pos[t] and neg[t] for tiers t = 0..l-1.
struct ChainComponents {
  std::vector<ComponentTriple> pos;
  std::vector<ComponentTriple> neg;
};

struct TriDeLossOptions {
  double margin = 0.2;
  double lambda = 0.1;
  // Distance 1 - cos in the margin terms; false reads cos as similarity.
  bool cosine_distance = true;
};

struct TriDeLossParts {
  Var orthogonality;  // lambda * mean over sentences of sum |i . j|
  Var margin;         // mean over chains of the hinged tier terms
  Var total;
};

// Throws std::invalid_argument when a tier lacks a component that the rest of
// its chain carries.
TriDeLossParts tride_loss(diff::Graph& g, std::span<const ChainComponents> batch, const TriDeLossOptions& options);

}  // namespace tase::tride
