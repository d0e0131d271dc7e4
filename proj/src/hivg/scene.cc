#include "tase/hivg/scene.h"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

namespace tase::hivg {

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

const SceneObject& Scene::object(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw std::out_of_range("scene " + std::to_string(this->id) + " has no object " + std::to_string(id));
}

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& w, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < w.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += w[i];
  }
  return out;
}

}  // namespace

std::string render(const CaptionSpec& s, const VocabTables& tables) {
  std::string out;
  auto put = [&](const std::string& w) {
    if (!out.empty()) out += ' ';
    out += w;
  };
  if (s.no_det) put(tables.determiners.front());
  if (s.attr) {
    if (s.attr->negated) put(tables.attribute_negator);
    put(s.attr->value);
  }
  put(s.noun);
  if (s.rel) {
    if (!s.rel->negated) {
      put(s.rel->phrase);
    } else {
      const std::string kind = tables.relation_kind(s.rel->phrase);
      if (kind.empty()) throw std::invalid_argument("render: unknown relation '" + s.rel->phrase + "'");
      for (const auto& r : tables.kind_relations(kind)) {
        if (r.phrase == s.rel->phrase) put(r.negated);
      }
    }
  }
  return out;
}

CaptionSpec parse_caption(const std::string& caption, const VocabTables& tables) {
  const auto w = words_of(caption);
  std::size_t i = 0;
  CaptionSpec s;
  auto fail = [&](const std::string& why) { throw CaptionParseError("cannot parse '" + caption + "': " + why); };
  if (w.empty()) fail("empty caption");
  if (std::find(tables.determiners.begin(), tables.determiners.end(), w[i]) != tables.determiners.end()) {
    s.no_det = true;
    ++i;
  }
  bool negated = false;
  if (i < w.size() && w[i] == tables.attribute_negator) {
    negated = true;
    ++i;
  }
  if (i < w.size() && tables.is_attribute(w[i])) {
    s.attr = AttributeSpec{tables.attribute(w[i]).cls, w[i], negated};
    ++i;
  } else if (negated) {
    fail("negator without attribute");
  }
  if (i >= w.size() || !tables.is_noun(w[i])) fail("missing noun");
  s.noun = w[i++];
  if (i < w.size()) {
    const std::string rest = join(w, i);
    for (const auto& [kind, list] : tables.relations) {
      for (const auto& r : list) {
        if (r.phrase == rest) s.rel = RelationSpec{r.phrase, false};
        if (r.negated == rest) s.rel = RelationSpec{r.phrase, true};
      }
    }
    if (!s.rel) fail("unknown relation '" + rest + "'");
  }
  return s;
}

bool matches(const CaptionSpec& s, const SceneObject& o) {
  if (s.no_det || s.noun != o.noun) return false;
  if (s.attr) {
    auto it = o.attributes.find(s.attr->cls);
    const bool has = it != o.attributes.end() && it->second == s.attr->value;
    if (has == s.attr->negated) return false;
  }
  if (s.rel) {
    const bool has = std::find(o.relations.begin(), o.relations.end(), s.rel->phrase) != o.relations.end();
    if (has == s.rel->negated) return false;
  }
  return true;
}

std::vector<int> matching_objects(const CaptionSpec& s, const Scene& scene) {
  std::vector<int> out;
  for (const auto& o : scene.objects) {
    if (matches(s, o)) out.push_back(o.id);
  }
  return out;
}

std::vector<int> matching_objects(const std::string& caption, const Scene& scene, const VocabTables& tables) {
  return matching_objects(parse_caption(caption, tables), scene);
}

std::string spatial_word(const Box& box, double width) {
  const double c = box.cx() / width;
  if (c < 1.0 / 3.0) return "left";
  if (c < 2.0 / 3.0) return "middle";
  return "right";
}

void SceneConfig::validate() const {
  if (min_objects < 2 || max_objects > 10 || min_objects > max_objects) {
    throw std::invalid_argument("SceneConfig: object count must satisfy 2 <= min <= max <= 10");
  }
  if (distractors < 1) throw std::invalid_argument("SceneConfig: at least one same-category distractor is required");
  if (distractors + 1 > max_objects) throw std::invalid_argument("SceneConfig: too many distractors for max_objects");
  if (static_cast<int>(fixed.size()) > max_objects) throw std::invalid_argument("SceneConfig: too many fixed objects");
  if (retries < 1) throw std::invalid_argument("SceneConfig: retries must be positive");
}

std::vector<std::pair<std::string, std::string>> unique_descriptions(const Scene& scene, int object_id) {
  const SceneObject& o = scene.object(object_id);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [cls, value] : o.attributes) {
    for (const auto& r : o.relations) {
      CaptionSpec s{false, o.noun, AttributeSpec{cls, value, false}, RelationSpec{r, false}};
      const auto m = matching_objects(s, scene);
      if (m.size() == 1 && m[0] == object_id) out.emplace_back(cls, r);
    }
  }
  return out;
}

namespace {

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

Box place_box(std::mt19937_64& rng, const std::string& spatial) {
  std::uniform_real_distribution<double> size(0.12, 0.3);
  const double w = size(rng), h = size(rng);
  double x0;
  if (spatial.empty()) {
    x0 = std::uniform_real_distribution<double>(0.0, 1.0 - w)(rng);
  } else {
    const int third = spatial == "left" ? 0 : spatial == "middle" ? 1 : 2;
    const double cx = std::uniform_real_distribution<double>(third / 3.0, (third + 1) / 3.0)(rng);
    x0 = std::clamp(cx - 0.5 * w, 0.0, 1.0 - w);
  }
  const double y0 = std::uniform_real_distribution<double>(0.0, 1.0 - h)(rng);
  return Box{x0, y0, x0 + w, y0 + h};
}

void sample_properties(std::mt19937_64& rng, const SceneConfig& c, const VocabTables& t, SceneObject& o) {
  std::bernoulli_distribution attr(c.attribute_prob), rel(c.relation_prob);
  for (const auto& cls : kAttributeClasses) {
    if (cls == "spatial") continue;
    if (attr(rng)) o.attributes[cls] = pick(rng, t.class_words(cls));
  }
  const auto& rels = t.kind_relations(t.noun(o.noun).kind);
  for (const auto& r : rels) {
    if (rel(rng)) o.relations.push_back(r.phrase);
  }
  if (o.relations.empty()) o.relations.push_back(pick(rng, rels).phrase);
}

}  // namespace

Scene generate_scene(const SceneConfig& c, std::uint64_t seed, const VocabTables& t) {
  c.validate();
  for (const auto& f : c.fixed) {
    t.noun(f.noun);
    for (const auto& [cls, w] : f.attributes) {
      if (t.attribute(w).cls != cls) throw std::invalid_argument("fixed object: '" + w + "' is not a " + cls);
    }
    if (f.relations.empty()) throw std::invalid_argument("fixed object " + f.noun + " needs a relation");
  }
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < c.retries; ++attempt) {
    const int n = std::max<int>(
        {std::uniform_int_distribution<int>(c.min_objects, c.max_objects)(rng), static_cast<int>(c.fixed.size()),
         c.distractors + 1});
    std::vector<std::string> nouns;
    for (const auto& f : c.fixed) nouns.push_back(f.noun);
    const std::string anchor = c.fixed.empty() ? pick(rng, t.nouns).noun : c.fixed.front().noun;
    while (static_cast<int>(std::count(nouns.begin(), nouns.end(), anchor)) < c.distractors + 1 &&
           static_cast<int>(nouns.size()) < n) {
      nouns.push_back(anchor);
    }
    while (static_cast<int>(nouns.size()) < n) nouns.push_back(pick(rng, t.nouns).noun);

    Scene s;
    s.id = seed;
    bool placed = true;
    for (int i = 0; i < n && placed; ++i) {
      SceneObject o;
      o.id = i;
      o.noun = nouns[i];
      std::string spatial;
      if (i < static_cast<int>(c.fixed.size())) {
        o.attributes = c.fixed[i].attributes;
        o.relations = c.fixed[i].relations;
        auto it = o.attributes.find("spatial");
        if (it != o.attributes.end()) spatial = it->second;
      } else {
        sample_properties(rng, c, t, o);
      }
      placed = false;
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        o.box = place_box(rng, spatial);
        placed = std::all_of(s.objects.begin(), s.objects.end(),
                             [&](const SceneObject& p) { return iou(p.box, o.box) <= c.max_overlap; });
      }
      o.attributes["spatial"] = spatial_word(o.box, s.width);
      s.objects.push_back(std::move(o));
    }
    if (!placed) continue;
    bool ok = true;
    for (const auto& o : s.objects) ok = ok && !unique_descriptions(s, o.id).empty();
    if (ok) return s;
  }
  throw UnsatisfiableError("generate_scene: no scene with uniquely describable objects after " +
                           std::to_string(c.retries) + " attempts (seed " + std::to_string(seed) + ")");
}

}  // namespace tase::hivg
