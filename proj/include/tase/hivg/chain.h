#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tase/hivg/scene.h"

namespace tase::hivg {

inline constexpr int kTiers = 3;

enum class NegativeKind {
  kAntonym,
  kRandomNoun,
  kDeterminer,
  kAttributeSwap,
  kAttributeNegation,
  kRelationSwap,
  kRelationNegation,
};

const char* kind_name(NegativeKind k);
NegativeKind parse_kind(const std::string& s);
// Kinds that can produce a negative at tier t (0-based).
std::vector<NegativeKind> tier_kinds(int tier);

struct ChainOptions {
  std::string primary_class = "spatial";
  double primary_class_prob = 0.5;
  // Sampling weights; hard kinds carry twice the weight of easy ones.
  double w_antonym = 2.0;
  double w_random_noun = 0.5;
  double w_determiner = 0.5;
  double w_swap = 2.0;
  double w_negation = 1.0;
  int min_tier3_words = 4;
};

struct PositiveChain {
  std::uint64_t scene_id = 0;
  int target_id = 0;
  std::array<CaptionSpec, kTiers> tiers;
};

struct ChainTier {
  std::string positive;
  std::string negative;
  NegativeKind kind = NegativeKind::kAntonym;
  bool operator==(const ChainTier&) const = default;
};

struct CaptionChain {
  std::uint64_t scene_id = 0;
  int target_id = 0;
  std::array<ChainTier, kTiers> tiers;
  bool operator==(const CaptionChain&) const = default;
};

class AttributeExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoValidNegativeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tier 1 is the category, tier 2 prefixes one true attribute, tier 3 appends
// one true relation; the tier-3 caption is unique in the scene.
PositiveChain positive_chain(const Scene& scene, int object_id, std::uint64_t seed, const ChainOptions& options = {});

// All candidate negatives of a kind at a tier, each false for the target.
std::vector<CaptionSpec> negative_candidates(const Scene& scene, const PositiveChain& positive, int tier,
                                             NegativeKind kind, const VocabTables& tables = builtin_tables());

CaptionChain negative_chain(const Scene& scene, const PositiveChain& positive, std::uint64_t seed,
                            const ChainOptions& options = {});

// Independent structural check; returns one message per violation.
std::vector<std::string> validate_chain(const Scene& scene, const CaptionChain& chain, const ChainOptions& options = {});

}  // namespace tase::hivg
