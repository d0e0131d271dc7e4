#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "tase/hivg/corpus.h"

using namespace tase::hivg;

namespace {

// Brute-force predicate evaluation straight from the object record, kept
// apart from `matches`.
bool holds(const SceneObject& o, const std::string& noun, const std::string& cls, const std::string& value,
           const std::string& rel) {
  if (o.noun != noun) return false;
  auto it = o.attributes.find(cls);
  if (it == o.attributes.end() || it->second != value) return false;
  return std::find(o.relations.begin(), o.relations.end(), rel) != o.relations.end();
}

Scene woman_scene() {
  Scene s;
  s.id = 42;
  s.objects.push_back({0, {0.40, 0.2, 0.60, 0.7}, "woman", {{"spatial", "middle"}}, {"with dark hair"}});
  s.objects.push_back({1, {0.05, 0.2, 0.25, 0.7}, "woman", {{"spatial", "left"}}, {"with red shirt"}});
  s.objects.push_back({2, {0.70, 0.3, 0.90, 0.6}, "dog", {{"spatial", "right"}}, {"with a collar"}});
  return s;
}

bool contains(const std::vector<CaptionSpec>& v, const std::string& caption) {
  return std::any_of(v.begin(), v.end(), [&](const CaptionSpec& c) { return render(c) == caption; });
}

}  // namespace

TEST_CASE("builtin tables are well formed") {
  const auto& t = builtin_tables();
  CHECK_NOTHROW(t.validate());
  CHECK(t.nouns.size() >= 50);
  CHECK(t.attributes.size() >= 25);
  std::size_t rels = 0;
  for (const auto& [k, list] : t.relations) rels += list.size();
  CHECK(rels >= 25);
  for (const auto& a : t.attributes) {
    for (const auto& c : a.contrast) CHECK(t.attribute(c).cls == a.cls);
  }
  CHECK(t.kind_relations("person").front().negated.rfind("without", 0) == 0);
}

TEST_CASE("caption render and parse round trip") {
  for (const std::string c : {"woman", "no dog", "middle woman", "not tall man", "middle woman with dark hair",
                              "left woman without red shirt", "red car not parked outside"}) {
    CHECK(render(parse_caption(c)) == c);
  }
  CHECK_THROWS_AS(parse_caption(""), CaptionParseError);
  CHECK_THROWS_AS(parse_caption("woman with"), CaptionParseError);
  CHECK_THROWS_AS(parse_caption("not woman"), CaptionParseError);
  CHECK_THROWS_AS(parse_caption("unicorn"), CaptionParseError);
}

TEST_CASE("scene generation is deterministic per seed") {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 3;
  const Scene a = generate_scene(cfg, 7), b = generate_scene(cfg, 7);
  CHECK(a == b);
  CHECK(a.objects.size() == 3);
  CHECK_FALSE(generate_scene(cfg, 8) == a);
}

TEST_CASE("identical pinned objects are unsatisfiable") {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 2;
  ObjectSpec o{"cat", {{"color", "black"}, {"spatial", "left"}}, {"with a collar"}};
  cfg.fixed = {o, o};
  CHECK_THROWS_AS(generate_scene(cfg, 1), UnsatisfiableError);
}

TEST_CASE("generated scenes satisfy bounds, distractors and uniqueness") {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 5;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    REQUIRE(s.objects.size() == 5);
    std::map<std::string, int> per_noun;
    for (const auto& o : s.objects) {
      CHECK(o.box.x0 >= 0.0);
      CHECK(o.box.y0 >= 0.0);
      CHECK(o.box.x1 <= s.width);
      CHECK(o.box.y1 <= s.height);
      CHECK(o.box.area() > 0.0);
      CHECK(o.attributes.at("spatial") == spatial_word(o.box, s.width));
      ++per_noun[o.noun];
    }
    CHECK(std::any_of(per_noun.begin(), per_noun.end(), [](const auto& p) { return p.second >= 2; }));
    // Every object has a tier-3 description no other object satisfies.
    for (const auto& o : s.objects) {
      bool unique = false;
      for (const auto& [cls, value] : o.attributes) {
        for (const auto& rel : o.relations) {
          int n = 0;
          for (const auto& other : s.objects) n += holds(other, o.noun, cls, value, rel);
          unique |= n == 1;
        }
      }
      CHECK(unique);
    }
  }
}

TEST_CASE("positive chain of the woman example") {
  const Scene s = woman_scene();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PositiveChain p = positive_chain(s, 0, seed);
    CHECK(render(p.tiers[0]) == "woman");
    CHECK(render(p.tiers[1]) == "middle woman");
    CHECK(render(p.tiers[2]) == "middle woman with dark hair");
  }
  Scene bare = s;
  bare.objects[2].attributes.clear();
  CHECK_THROWS_AS(positive_chain(bare, 2, 0), AttributeExhaustedError);
}

TEST_CASE("attribute class follows the 50% rule") {
  Scene s;
  s.objects.push_back({0, {0.4, 0.1, 0.6, 0.5}, "car", {{"spatial", "middle"}, {"color", "red"}}, {"parked outside"}});
  int spatial = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spatial += positive_chain(s, 0, seed).tiers[1].attr->cls == "spatial";
  }
  const double ratio = spatial / 100.0;
  CHECK(ratio >= 0.35);
  CHECK(ratio <= 0.65);
}

TEST_CASE("negatives of the woman example") {
  const Scene s = woman_scene();
  const PositiveChain p = positive_chain(s, 0, 0);
  CHECK(contains(negative_candidates(s, p, 0, NegativeKind::kAntonym), "man"));
  CHECK(contains(negative_candidates(s, p, 1, NegativeKind::kAttributeSwap), "left woman"));
  CHECK(contains(negative_candidates(s, p, 2, NegativeKind::kRelationSwap), "middle woman with red shirt"));
  CHECK(contains(negative_candidates(s, p, 1, NegativeKind::kAttributeNegation), "not middle woman"));
  CHECK(contains(negative_candidates(s, p, 2, NegativeKind::kRelationNegation), "middle woman without dark hair"));
  CHECK_THROWS_AS(negative_candidates(s, p, 0, NegativeKind::kRelationSwap), std::invalid_argument);

  const PositiveChain dog = positive_chain(s, 2, 0);
  const auto det = negative_candidates(s, dog, 0, NegativeKind::kDeterminer);
  REQUIRE(det.size() == 1);
  CHECK(render(det[0]) == "no dog");
  for (const auto& c : negative_candidates(s, dog, 0, NegativeKind::kRandomNoun)) {
    CHECK(builtin_tables().noun(c.noun).kind != "animal");
  }
}

TEST_CASE("no valid negative") {
  // A target carrying every relation of its kind leaves no false relation to
  // swap in; with negation disabled the tier-3 negative cannot be formed.
  Scene s;
  std::vector<std::string> all;
  for (const auto& r : builtin_tables().kind_relations("animal")) all.push_back(r.phrase);
  s.objects.push_back({0, {0.4, 0.1, 0.6, 0.5}, "dog", {{"spatial", "middle"}}, all});
  ChainOptions o;
  o.w_negation = 0.0;
  const PositiveChain p = positive_chain(s, 0, 3, o);
  CHECK_THROWS_AS(negative_chain(s, p, 3, o), NoValidNegativeError);
}

TEST_CASE("generated chains pass structural validation and ground truth") {
  GenConfig cfg;
  cfg.seed = 5;
  cfg.scenes = 200;
  cfg.chains_per_scene = 2;
  const Corpus c = generate_corpus(cfg);
  CHECK(c.chains.size() >= 200);
  std::map<std::uint64_t, const Scene*> by_id;
  for (const auto& s : c.scenes) by_id[s.id] = &s;
  for (const auto& chain : c.chains) {
    const Scene& s = *by_id.at(chain.scene_id);
    const auto bad = validate_chain(s, chain);
    for (const auto& b : bad) INFO(b);
    CHECK(bad.empty());
    // Every negative is false for the target under exhaustive evaluation.
    for (const auto& t : chain.tiers) {
      const auto m = matching_objects(t.negative, s);
      CHECK(std::find(m.begin(), m.end(), chain.target_id) == m.end());
      const auto pm = matching_objects(t.positive, s);
      CHECK(std::find(pm.begin(), pm.end(), chain.target_id) != pm.end());
    }
  }
}

TEST_CASE("corpus round trip and determinism") {
  GenConfig cfg;
  cfg.seed = 11;
  cfg.scenes = 100;
  const Corpus c = generate_corpus(cfg);
  CHECK(c.chains.size() == 100);
  std::ostringstream ch, sc;
  write_chains(ch, c);
  write_scenes(sc, c.scenes);
  std::istringstream chi(ch.str()), sci(sc.str());
  CHECK(read_chains(chi) == c.chains);
  CHECK(read_scenes(sci) == c.scenes);

  std::ostringstream again;
  write_chains(again, generate_corpus(cfg));
  CHECK(again.str() == ch.str());
}

TEST_CASE("loader rejects malformed records with a line number") {
  GenConfig cfg;
  cfg.scenes = 3;
  const Corpus c = generate_corpus(cfg);
  std::ostringstream ch;
  write_chains(ch, c);
  std::string text = ch.str();
  // Drop the last tier of the second record (line 3).
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  auto j = nlohmann::json::parse(lines[2]);
  j["tiers"].erase(2);
  lines[2] = j.dump();
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  std::istringstream bi(broken);
  try {
    read_chains(bi);
    FAIL("expected CorpusFormatError");
  } catch (const CorpusFormatError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream no_header("{\"scene_id\":1}\n");
  CHECK_THROWS_AS(read_chains(no_header), CorpusFormatError);
}

TEST_CASE("emission rejects invalid chains") {
  GenConfig cfg;
  cfg.scenes = 2;
  Corpus c = generate_corpus(cfg);
  c.chains[0].tiers[0].negative = c.chains[0].tiers[0].positive;
  std::ostringstream out;
  CHECK_THROWS_AS(write_chains(out, c), std::invalid_argument);
  CHECK(out.str().empty());
}

TEST_CASE("caption length grows with the tier") {
  GenConfig cfg;
  cfg.seed = 3;
  cfg.scenes = 10000;
  const Corpus c = generate_corpus(cfg);
  const CorpusStats st = corpus_stats(c.chains);
  CHECK(c.chains.size() == 10000);
  CHECK(st.mean_words[2] > st.mean_words[1]);
  CHECK(st.mean_words[1] > st.mean_words[0]);
  for (const auto& [n, count] : st.word_histogram[2]) CHECK(n >= cfg.chain.min_tier3_words);
  // Hard kinds are drawn more often than easy ones at tier 1.
  CHECK(st.kind_counts.at("antonym") > st.kind_counts.at("determiner"));
}
