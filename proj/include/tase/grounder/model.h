#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tase/grounder/losses.h"
#include "tase/grounder/vision.h"
#include "tase/tride/encoder.h"
#include "tase/tride/tride.h"

namespace tase::grounder {

using tride::Binder;
using tride::ParamStore;

struct ModelConfig {
  tride::EncoderConfig encoder;
  tride::TriDeConfig tride;
  VisionConfig vision;
  bool lexical_prior = true;
  // Residual MLP between E and the scoring space; zero-initialized output.
  bool fusion = true;
  // Score E - root, the hierarchy's own origin, instead of raw E.
  bool center_on_root = true;
  std::size_t fusion_hidden = 64;
  double tau = 0.07;

  void validate() const;
};

struct DetectionOutput {
  std::vector<double> scores;  // per proposal, in (0, 1)
  std::vector<hivg::Box> boxes;
  std::vector<std::size_t> ranking;  // proposal indices by descending score
};

class GroundingModel {
 public:
  explicit GroundingModel(ModelConfig config, const hivg::VocabTables& tables = hivg::builtin_tables());

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return *store_; }
  const ParamStore& store() const { return *store_; }
  const tride::EncoderStub& encoder() const { return *encoder_; }
  const VisionEncoder& vision() const { return vision_; }
  // Frozen reference embedding: E of the root token at initialization.
  const std::vector<double>& root() const { return root_; }

  struct Embedding {
    tride::TriDeOutput tride;
    Var query;  // E after the fusion layer
  };
  Embedding embed(Binder& b, const std::string& caption) const;
  std::vector<double> embed_value(const std::string& caption) const;
  tride::TriDeOutput components_value(Binder& b, const std::string& caption) const;
  // Unit pooled components, one vector per active component.
  std::vector<std::vector<double>> pooled_components(const std::string& caption) const;

  // Refined box of one proposal through the affine delta head.
  BoxVars refine_box(Binder& b, const Proposal& p) const;
  hivg::Box refine_box(const Proposal& p) const;

  DetectionOutput detect(const std::string& caption, const std::vector<Proposal>& proposals) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<tride::EncoderStub> encoder_;
  VisionEncoder vision_;
  std::vector<double> root_;
};

tride::Vocabulary caption_vocabulary(const hivg::VocabTables& tables = hivg::builtin_tables());

}  // namespace tase::grounder
