#include "tase/hivg/chain.h"

#include <algorithm>
#include <random>
#include <sstream>

namespace tase::hivg {

const char* kind_name(NegativeKind k) {
  switch (k) {
    case NegativeKind::kAntonym:
      return "antonym";
    case NegativeKind::kRandomNoun:
      return "random-noun";
    case NegativeKind::kDeterminer:
      return "determiner";
    case NegativeKind::kAttributeSwap:
      return "attribute-swap";
    case NegativeKind::kAttributeNegation:
      return "attribute-negation";
    case NegativeKind::kRelationSwap:
      return "relation-swap";
    case NegativeKind::kRelationNegation:
      return "relation-negation";
  }
  return "?";
}

NegativeKind parse_kind(const std::string& s) {
  for (int t = 0; t < kTiers; ++t) {
    for (NegativeKind k : tier_kinds(t)) {
      if (s == kind_name(k)) return k;
    }
  }
  throw std::invalid_argument("unknown negative kind '" + s + "'");
}

std::vector<NegativeKind> tier_kinds(int tier) {
  switch (tier) {
    case 0:
      return {NegativeKind::kAntonym, NegativeKind::kRandomNoun, NegativeKind::kDeterminer};
    case 1:
      return {NegativeKind::kAttributeSwap, NegativeKind::kAttributeNegation};
    case 2:
      return {NegativeKind::kRelationSwap, NegativeKind::kRelationNegation};
  }
  throw std::out_of_range("tier " + std::to_string(tier) + " out of range");
}

namespace {

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double kind_weight(NegativeKind k, const ChainOptions& o) {
  switch (k) {
    case NegativeKind::kAntonym:
      return o.w_antonym;
    case NegativeKind::kRandomNoun:
      return o.w_random_noun;
    case NegativeKind::kDeterminer:
      return o.w_determiner;
    case NegativeKind::kAttributeSwap:
    case NegativeKind::kRelationSwap:
      return o.w_swap;
    case NegativeKind::kAttributeNegation:
    case NegativeKind::kRelationNegation:
      return o.w_negation;
  }
  return 0.0;
}

}  // namespace

PositiveChain positive_chain(const Scene& scene, int object_id, std::uint64_t seed, const ChainOptions& o) {
  const SceneObject& obj = scene.object(object_id);
  if (obj.attributes.empty()) {
    throw AttributeExhaustedError("object " + std::to_string(object_id) + " (" + obj.noun + ") has no attributes");
  }
  if (obj.relations.empty()) {
    throw AttributeExhaustedError("object " + std::to_string(object_id) + " (" + obj.noun + ") has no relations");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::string> others;
  for (const auto& [cls, w] : obj.attributes) {
    if (cls != o.primary_class) others.push_back(cls);
  }
  const bool has_primary = obj.attributes.count(o.primary_class) > 0;
  std::string cls;
  const bool take_primary = std::bernoulli_distribution(o.primary_class_prob)(rng);
  if (has_primary && (take_primary || others.empty())) {
    cls = o.primary_class;
  } else {
    cls = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
  }
  // Preferred class first, then the rest in a seeded order; relations shuffled.
  std::vector<std::string> classes{cls};
  std::vector<std::string> rest;
  for (const auto& [c, w] : obj.attributes) {
    if (c != cls) rest.push_back(c);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  classes.insert(classes.end(), rest.begin(), rest.end());
  std::vector<std::string> rels = obj.relations;
  std::shuffle(rels.begin(), rels.end(), rng);

  for (const auto& c : classes) {
    for (const auto& r : rels) {
      PositiveChain p;
      p.scene_id = scene.id;
      p.target_id = object_id;
      p.tiers[0] = CaptionSpec{false, obj.noun, std::nullopt, std::nullopt};
      p.tiers[1] = CaptionSpec{false, obj.noun, AttributeSpec{c, obj.attributes.at(c), false}, std::nullopt};
      p.tiers[2] = p.tiers[1];
      p.tiers[2].rel = RelationSpec{r, false};
      const auto m = matching_objects(p.tiers[2], scene);
      if (m.size() != 1 || m[0] != object_id) continue;
      if (static_cast<int>(word_count(render(p.tiers[2]))) < o.min_tier3_words) continue;
      return p;
    }
  }
  throw UnsatisfiableError("object " + std::to_string(object_id) + " in scene " + std::to_string(scene.id) +
                           " has no unique tier-3 description");
}

std::vector<CaptionSpec> negative_candidates(const Scene& scene, const PositiveChain& p, int tier, NegativeKind kind,
                                             const VocabTables& t) {
  const SceneObject& obj = scene.object(p.target_id);
  const CaptionSpec& pos = p.tiers.at(static_cast<std::size_t>(tier));
  const auto allowed = tier_kinds(tier);
  if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) {
    throw std::invalid_argument(std::string("negative kind ") + kind_name(kind) + " does not apply to tier " +
                                std::to_string(tier + 1));
  }
  std::vector<CaptionSpec> out;
  auto offer = [&](CaptionSpec s) {
    if (!matches(s, obj)) out.push_back(std::move(s));
  };
  switch (kind) {
    case NegativeKind::kAntonym:
      for (const auto& c : t.noun(pos.noun).contrast) offer(CaptionSpec{false, c, std::nullopt, std::nullopt});
      break;
    case NegativeKind::kRandomNoun: {
      const std::string kind_of = t.noun(pos.noun).kind;
      for (const auto& n : t.nouns) {
        if (n.kind != kind_of) offer(CaptionSpec{false, n.noun, std::nullopt, std::nullopt});
      }
      break;
    }
    case NegativeKind::kDeterminer:
      offer(CaptionSpec{true, pos.noun, std::nullopt, std::nullopt});
      break;
    case NegativeKind::kAttributeSwap:
      for (const auto& c : t.attribute(pos.attr->value).contrast) {
        CaptionSpec s = pos;
        s.attr->value = c;
        offer(s);
      }
      break;
    case NegativeKind::kAttributeNegation: {
      CaptionSpec s = pos;
      s.attr->negated = true;
      offer(s);
      break;
    }
    case NegativeKind::kRelationSwap:
      for (const auto& r : t.kind_relations(t.noun(pos.noun).kind)) {
        CaptionSpec s = pos;
        s.rel = RelationSpec{r.phrase, false};
        if (r.phrase != pos.rel->phrase) offer(s);
      }
      break;
    case NegativeKind::kRelationNegation: {
      CaptionSpec s = pos;
      s.rel->negated = true;
      offer(s);
      break;
    }
  }
  return out;
}

CaptionChain negative_chain(const Scene& scene, const PositiveChain& p, std::uint64_t seed, const ChainOptions& o) {
  std::mt19937_64 rng(seed);
  CaptionChain chain;
  chain.scene_id = p.scene_id;
  chain.target_id = p.target_id;
  for (int t = 0; t < kTiers; ++t) {
    std::vector<NegativeKind> kinds;
    std::vector<std::vector<CaptionSpec>> cands;
    std::vector<double> weights;
    for (NegativeKind k : tier_kinds(t)) {
      auto c = negative_candidates(scene, p, t, k);
      if (c.empty() || kind_weight(k, o) <= 0.0) continue;
      kinds.push_back(k);
      cands.push_back(std::move(c));
      weights.push_back(kind_weight(k, o));
    }
    if (kinds.empty()) {
      throw NoValidNegativeError("no valid tier-" + std::to_string(t + 1) + " negative for object " +
                                 std::to_string(p.target_id) + " in scene " + std::to_string(scene.id));
    }
    const std::size_t which = std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
    const auto& pool = cands[which];
    const CaptionSpec& neg = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    chain.tiers[t] = ChainTier{render(p.tiers[t]), render(neg), kinds[which]};
  }
  return chain;
}

std::vector<std::string> validate_chain(const Scene& scene, const CaptionChain& c, const ChainOptions& o) {
  std::vector<std::string> bad;
  auto note = [&](int t, const std::string& what) { bad.push_back("tier " + std::to_string(t + 1) + ": " + what); };
  const SceneObject* target = nullptr;
  for (const auto& obj : scene.objects) {
    if (obj.id == c.target_id) target = &obj;
  }
  if (!target) return {"target " + std::to_string(c.target_id) + " not in scene"};

  std::array<CaptionSpec, kTiers> pos, neg;
  for (int t = 0; t < kTiers; ++t) {
    try {
      pos[t] = parse_caption(c.tiers[t].positive);
      neg[t] = parse_caption(c.tiers[t].negative);
    } catch (const CaptionParseError& e) {
      note(t, e.what());
      return bad;
    }
  }
  // Containment as token sequences.
  const auto w1 = words_of(c.tiers[0].positive), w2 = words_of(c.tiers[1].positive), w3 = words_of(c.tiers[2].positive);
  if (w1.size() != 1) note(0, "positive is not a single category noun");
  if (w2.size() != w1.size() + 1 || !std::equal(w1.begin(), w1.end(), w2.begin() + 1)) {
    note(1, "positive is not one attribute prefixed to tier 1");
  }
  if (w3.size() < w2.size() + 2 || !std::equal(w2.begin(), w2.end(), w3.begin())) {
    note(2, "positive is not tier 2 with a relation appended");
  }
  if (pos[0].attr || pos[0].rel || pos[0].no_det) note(0, "positive carries more than the noun");
  if (!pos[1].attr || pos[1].attr->negated || pos[1].rel) note(1, "positive must be one true attribute");
  if (!pos[2].rel || pos[2].rel->negated) note(2, "positive must carry one true relation");

  for (int t = 0; t < kTiers; ++t) {
    if (!matches(pos[t], *target)) note(t, "positive is false for the target");
    if (matches(neg[t], *target)) note(t, "negative is true for the target");
    const auto allowed = tier_kinds(t);
    if (std::find(allowed.begin(), allowed.end(), c.tiers[t].kind) == allowed.end()) note(t, "kind not valid here");
  }
  // Locality: only the tier's own component may differ.
  if (neg[0].attr || neg[0].rel || (neg[0].noun == pos[0].noun && neg[0].no_det == pos[0].no_det)) {
    note(0, "negative does not change exactly the object");
  }
  if (neg[1].no_det || neg[1].noun != pos[1].noun || neg[1].rel || !neg[1].attr || neg[1].attr->cls != pos[1].attr->cls ||
      neg[1].attr == pos[1].attr) {
    note(1, "negative does not change exactly the attribute");
  }
  if (neg[2].no_det || neg[2].noun != pos[2].noun || neg[2].attr != pos[2].attr || !neg[2].rel ||
      neg[2].rel == pos[2].rel) {
    note(2, "negative does not change exactly the relation");
  }
  const auto m = matching_objects(pos[2], scene);
  if (m.size() != 1 || m[0] != c.target_id) note(2, "positive matches " + std::to_string(m.size()) + " objects");
  if (static_cast<int>(w3.size()) < o.min_tier3_words) note(2, "positive shorter than the minimum length");
  return bad;
}

}  // namespace tase::hivg
