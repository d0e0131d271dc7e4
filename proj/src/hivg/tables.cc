#include "tase/hivg/tables.h"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tase::hivg {

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

RelationEntry rel(const std::string& phrase) {
  if (phrase.rfind("with ", 0) == 0) return {phrase, "without " + phrase.substr(5)};
  return {phrase, "not " + phrase};
}

VocabTables build() {
  VocabTables t;
  auto pairs = [&](const std::string& kind, std::vector<std::pair<std::string, std::string>> list) {
    for (auto& [n, c] : list) t.nouns.push_back({n, kind, {c}});
  };
  pairs("person", {{"woman", "man"},
                   {"man", "woman"},
                   {"girl", "boy"},
                   {"boy", "girl"},
                   {"player", "referee"},
                   {"referee", "player"},
                   {"chef", "waiter"},
                   {"waiter", "chef"},
                   {"skier", "surfer"},
                   {"surfer", "skier"}});
  pairs("animal", {{"dog", "cat"},
                   {"cat", "dog"},
                   {"horse", "cow"},
                   {"cow", "horse"},
                   {"sheep", "goat"},
                   {"goat", "sheep"},
                   {"elephant", "giraffe"},
                   {"giraffe", "zebra"},
                   {"zebra", "horse"},
                   {"bird", "bat"},
                   {"bat", "bird"}});
  pairs("vehicle", {{"car", "truck"},
                    {"truck", "car"},
                    {"bus", "train"},
                    {"train", "bus"},
                    {"bicycle", "motorcycle"},
                    {"motorcycle", "bicycle"},
                    {"airplane", "helicopter"},
                    {"helicopter", "airplane"},
                    {"segway", "scooter"},
                    {"scooter", "segway"}});
  pairs("furniture", {{"chair", "stool"},
                      {"stool", "chair"},
                      {"table", "desk"},
                      {"desk", "table"},
                      {"sofa", "bed"},
                      {"bed", "sofa"},
                      {"bench", "chair"},
                      {"shelf", "cabinet"},
                      {"cabinet", "shelf"}});
  pairs("food", {{"apple", "pear"},
                 {"pear", "apple"},
                 {"banana", "carrot"},
                 {"carrot", "banana"},
                 {"pizza", "cake"},
                 {"cake", "pizza"},
                 {"sandwich", "burger"},
                 {"burger", "sandwich"},
                 {"donut", "bagel"},
                 {"bagel", "donut"}});
  pairs("object", {{"cup", "bowl"},
                   {"bowl", "cup"},
                   {"bottle", "vase"},
                   {"vase", "bottle"},
                   {"umbrella", "kite"},
                   {"kite", "umbrella"},
                   {"clock", "mirror"},
                   {"mirror", "clock"},
                   {"book", "laptop"},
                   {"laptop", "book"}});

  auto cls = [&](const std::string& c, std::vector<std::string> words) {
    for (const auto& w : words) {
      std::vector<std::string> others;
      for (const auto& o : words) {
        if (o != w) others.push_back(o);
      }
      t.attributes.push_back({w, c, others});
    }
  };
  cls("spatial", {"left", "middle", "right"});
  cls("color", {"red", "blue", "green", "yellow", "black", "white", "brown", "gray", "pink", "purple", "silver",
                "golden"});
  cls("number", {"one", "two", "three", "four", "several", "many"});
  // Size contrasts are restricted to opposing words.
  auto size = [&](const std::string& w, std::vector<std::string> c) { t.attributes.push_back({w, "size", c}); };
  size("small", {"large", "huge"});
  size("large", {"small", "tiny"});
  size("tiny", {"huge", "large"});
  size("huge", {"tiny", "small"});
  size("tall", {"short"});
  size("short", {"tall"});
  size("wide", {"narrow"});
  size("narrow", {"wide"});

  auto rels = [&](const std::string& kind, std::vector<std::string> phrases) {
    for (const auto& p : phrases) t.relations[kind].push_back(rel(p));
  };
  rels("person", {"with dark hair", "with red shirt", "wearing a hat", "holding a cup", "with glasses",
                  "carrying a bag"});
  rels("animal", {"with a collar", "on a leash", "with spots", "lying down", "eating grass"});
  rels("vehicle", {"with lights on", "parked outside", "with open doors", "carrying cargo", "covered in mud"});
  rels("furniture", {"with a cushion", "near the window", "covered in books", "with a blanket", "made of wood"});
  rels("food", {"on a plate", "with a bite missing", "cut in half", "with sauce", "in a box"});
  rels("object", {"on the shelf", "with a handle", "next to a lamp", "filled with water", "with a crack"});
  return t;
}

}  // namespace

const NounEntry& VocabTables::noun(const std::string& n) const {
  for (const auto& e : nouns) {
    if (e.noun == n) return e;
  }
  throw std::out_of_range("unknown noun '" + n + "'");
}

const AttributeWord& VocabTables::attribute(const std::string& w) const {
  for (const auto& a : attributes) {
    if (a.word == w) return a;
  }
  throw std::out_of_range("unknown attribute '" + w + "'");
}

bool VocabTables::is_noun(const std::string& n) const {
  return std::any_of(nouns.begin(), nouns.end(), [&](const NounEntry& e) { return e.noun == n; });
}

bool VocabTables::is_attribute(const std::string& w) const {
  return std::any_of(attributes.begin(), attributes.end(), [&](const AttributeWord& a) { return a.word == w; });
}

std::vector<std::string> VocabTables::class_words(const std::string& c) const {
  std::vector<std::string> out;
  for (const auto& a : attributes) {
    if (a.cls == c) out.push_back(a.word);
  }
  return out;
}

const std::vector<RelationEntry>& VocabTables::kind_relations(const std::string& kind) const {
  auto it = relations.find(kind);
  if (it == relations.end()) throw std::out_of_range("no relations for kind '" + kind + "'");
  return it->second;
}

std::string VocabTables::relation_kind(const std::string& phrase) const {
  for (const auto& [kind, list] : relations) {
    for (const auto& r : list) {
      if (r.phrase == phrase) return kind;
    }
  }
  return {};
}

std::vector<std::string> VocabTables::tokens() const {
  std::set<std::string> s(determiners.begin(), determiners.end());
  s.insert(attribute_negator);
  for (const auto& n : nouns) s.insert(n.noun);
  for (const auto& a : attributes) s.insert(a.word);
  for (const auto& [kind, list] : relations) {
    for (const auto& r : list) {
      for (const auto& w : words_of(r.phrase)) s.insert(w);
      for (const auto& w : words_of(r.negated)) s.insert(w);
    }
  }
  return {s.begin(), s.end()};
}

void VocabTables::validate() const {
  std::set<std::string> seen;
  for (const auto& n : nouns) {
    if (!seen.insert(n.noun).second) throw std::logic_error("duplicate noun " + n.noun);
    if (n.contrast.empty()) throw std::logic_error("noun " + n.noun + " has no contrast");
    for (const auto& c : n.contrast) {
      if (c == n.noun || !is_noun(c)) throw std::logic_error("noun " + n.noun + " has invalid contrast " + c);
    }
    if (!relations.count(n.kind) || relations.at(n.kind).empty()) {
      throw std::logic_error("noun " + n.noun + " has no relations");
    }
  }
  for (const auto& a : attributes) {
    if (is_noun(a.word) || !seen.insert(a.word).second) throw std::logic_error("ambiguous attribute " + a.word);
    if (std::find(kAttributeClasses.begin(), kAttributeClasses.end(), a.cls) == kAttributeClasses.end()) {
      throw std::logic_error("attribute " + a.word + " has unknown class " + a.cls);
    }
    if (a.contrast.empty()) throw std::logic_error("attribute " + a.word + " has no contrast");
    for (const auto& c : a.contrast) {
      if (c == a.word || !is_attribute(c) || attribute(c).cls != a.cls) {
        throw std::logic_error("attribute " + a.word + " has invalid contrast " + c);
      }
    }
  }
  for (const auto& [kind, list] : relations) {
    for (const auto& r : list) {
      if (r.negated.empty() || r.negated == r.phrase) throw std::logic_error("relation '" + r.phrase + "' lacks negation");
    }
  }
}

const VocabTables& builtin_tables() {
  static const VocabTables t = [] {
    VocabTables v = build();
    v.validate();
    return v;
  }();
  return t;
}

}  // namespace tase::hivg
