#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tase/hivg/tables.h"

namespace tase::hivg {

struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct SceneObject {
  int id = 0;
  Box box;
  std::string noun;
  std::map<std::string, std::string> attributes;  // class -> word
  std::vector<std::string> relations;             // positive phrases that hold
  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::uint64_t id = 0;
  double width = 1.0;
  double height = 1.0;
  std::vector<SceneObject> objects;

  const SceneObject& object(int id) const;
  bool operator==(const Scene&) const = default;
};

// --- captions ---

struct AttributeSpec {
  std::string cls;
  std::string value;
  bool negated = false;
  bool operator==(const AttributeSpec&) const = default;
};

struct RelationSpec {
  std::string phrase;  // positive form
  bool negated = false;
  bool operator==(const RelationSpec&) const = default;
};

// [no] [not] [attribute] noun [relation]
struct CaptionSpec {
  bool no_det = false;
  std::string noun;
  std::optional<AttributeSpec> attr;
  std::optional<RelationSpec> rel;
  bool operator==(const CaptionSpec&) const = default;
};

class CaptionParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string render(const CaptionSpec& spec, const VocabTables& tables = builtin_tables());
CaptionSpec parse_caption(const std::string& caption, const VocabTables& tables = builtin_tables());

// Ground truth: does the object satisfy the caption? A determiner negative
// ("no dog") describes nothing.
bool matches(const CaptionSpec& spec, const SceneObject& object);
std::vector<int> matching_objects(const CaptionSpec& spec, const Scene& scene);
std::vector<int> matching_objects(const std::string& caption, const Scene& scene,
                                  const VocabTables& tables = builtin_tables());

// --- scene generation ---

std::string spatial_word(const Box& box, double width);

// Pinned object for tests and fixtures: the generator keeps its category,
// attributes (spatial places the box) and relations exactly.
struct ObjectSpec {
  std::string noun;
  std::map<std::string, std::string> attributes;
  std::vector<std::string> relations;
};

struct SceneConfig {
  int min_objects = 3;
  int max_objects = 6;
  int distractors = 1;  // same-category objects beside each scene's anchor
  double attribute_prob = 0.7;  // per non-spatial class
  double relation_prob = 0.4;   // per relation of the object's kind
  double max_overlap = 0.3;     // IoU allowed between boxes
  int retries = 50;
  std::vector<ObjectSpec> fixed;

  void validate() const;
};

class UnsatisfiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every object of the result has at least one tier-3 description that only
// it satisfies.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed, const VocabTables& tables = builtin_tables());

// Tier-3 descriptions (attribute class, relation) unique to the object.
std::vector<std::pair<std::string, std::string>> unique_descriptions(const Scene& scene, int object_id);

}  // namespace tase::hivg
