#pragma once

#include <map>
#include <string>
#include <vector>

namespace tase::hivg {

inline const std::vector<std::string> kAttributeClasses{"spatial", "color", "number", "size"};

struct NounEntry {
  std::string noun;
  std::string kind;
  std::vector<std::string> contrast;
};

struct AttributeWord {
  std::string word;
  std::string cls;
  std::vector<std::string> contrast;  // same class
};

struct RelationEntry {
  std::string phrase;
  std::string negated;
};

// Embedded lexical tables. Every noun has a contrast noun, every attribute a
// same-class contrast and every relation a negated form.
struct VocabTables {
  std::vector<NounEntry> nouns;
  std::vector<AttributeWord> attributes;
  std::map<std::string, std::vector<RelationEntry>> relations;  // by noun kind
  std::vector<std::string> determiners{"no"};
  std::string attribute_negator = "not";

  const NounEntry& noun(const std::string& n) const;
  const AttributeWord& attribute(const std::string& w) const;
  bool is_noun(const std::string& n) const;
  bool is_attribute(const std::string& w) const;
  std::vector<std::string> class_words(const std::string& cls) const;
  const std::vector<RelationEntry>& kind_relations(const std::string& kind) const;
  // Kind owning the phrase (positive form), or empty.
  std::string relation_kind(const std::string& phrase) const;

  // Every whitespace token that can appear in a caption, sorted.
  std::vector<std::string> tokens() const;
  // Throws std::logic_error naming the first broken entry.
  void validate() const;
};

const VocabTables& builtin_tables();

}  // namespace tase::hivg
