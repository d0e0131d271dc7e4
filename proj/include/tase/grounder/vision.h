#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tase/hivg/scene.h"
#include "tase/tride/encoder.h"

// Frozen stand-in for the vision backbone. Every noun, attribute word and
// relation phrase owns a random unit concept; an object's description
// embedding is the normalized weighted sum of the concepts it carries.
namespace tase::grounder {

struct VisionConfig {
  std::size_t dim = 32;
  double attribute_weight = 0.6;
  double relation_weight = 0.6;
  std::uint64_t seed = 3;
};

class VisionEncoder {
 public:
  explicit VisionEncoder(VisionConfig config, const hivg::VocabTables& tables = hivg::builtin_tables());

  const VisionConfig& config() const { return config_; }
  std::size_t dim() const { return config_.dim; }
  const std::vector<double>& concept_vector(const std::string& name) const;
  // Unit vector for the object's full ground-truth description.
  std::vector<double> describe(const hivg::SceneObject& object) const;

  // Text-side prior sharing the concepts: nouns and attribute words map to
  // their own concept, relation content words to the mean concept of the
  // phrases using them. Words shared by more than two phrases get none.
  tride::LexicalPrior lexical_prior() const;

 private:
  VisionConfig config_;
  std::map<std::string, std::vector<double>> concepts_;
  std::map<std::string, std::vector<double>> word_prior_;
};

struct Proposal {
  hivg::Box box;
  std::vector<double> feature;
  std::optional<int> source_object_id;
};

// One proposal per object: the description embedding plus N(0, noise_std)
// per coordinate, and the ground-truth box with each edge moved by
// N(0, box_jitter * side). Deterministic per seed.
std::vector<Proposal> proposal_features(const hivg::Scene& scene, const VisionEncoder& encoder, double noise_std,
                                        std::uint64_t seed, double box_jitter = 0.0);

}  // namespace tase::grounder
