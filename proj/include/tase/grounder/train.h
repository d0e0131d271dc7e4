#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tase/diff/adamw.h"
#include "tase/geometry/geometry.h"
#include "tase/grounder/model.h"
#include "tase/hivg/corpus.h"

namespace tase::grounder {

// Sentence-level objective added to the TriDe loss inside L_TaSe.
enum class LossMode { kBase, kCL, kRE, kH, kHPosOnly, kHNegOnly, kReverseH };

const char* mode_name(LossMode m);
LossMode parse_mode(const std::string& s);
std::vector<LossMode> all_modes();

struct LossWeights {
  double cls = 4.0;
  double bbox = 5.0;
  double giou = 2.0;
  double tase = 5.0;
  double lambda = 0.1;

  void validate() const;
};

struct LossReport {
  double cls = 0, bbox = 0, giou = 0;
  double tride = 0, orthogonality = 0, margin = 0;
  double sentence_pos = 0, sentence_neg = 0;  // H+ / H-, RE or CL in pos
  double tase = 0;
  double total = 0;
  double weighted(const LossWeights& w) const;
  nlohmann::json to_json() const;
};

// w.cls * cls + w.bbox * bbox + w.giou * giou + w.tase * tase.
double total_loss(double cls, double bbox, double giou, double tase, const LossWeights& w);

struct TrainConfig {
  LossMode mode = LossMode::kH;
  LossWeights weights;
  tride::TriDeLossOptions tride_loss;
  geometry::HierOptions hier;
  geometry::ReferenceMode reference = geometry::ReferenceMode::kDynamic;
  double lr_module = 1e-4;
  double lr_adapter = 5e-6;
  double weight_decay = 0.01;
  int iterations = 200;
  int batch_chains = 16;
  double noise_std = 0.1;
  double box_jitter = 0.05;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double cl_tau = 0.07;
  std::uint64_t seed = 0;

  void validate() const;
};

// Graph-side loss of one batch. `terms` hold every unweighted component.
struct BatchLoss {
  Var total;
  Var cls, bbox, giou, tride, orthogonality, margin, sentence_pos, sentence_neg, tase;
  LossReport report() const;
};

struct TrainSample {
  const hivg::Scene* scene;
  const hivg::CaptionChain* chain;
  std::vector<Proposal> proposals;
};

BatchLoss batch_loss(const GroundingModel& model, Binder& b, std::span<const TrainSample> batch,
                     const TrainConfig& config);

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(int step, const std::string& what);
  int step() const { return step_; }

 private:
  int step_;
};

class Trainer {
 public:
  Trainer(GroundingModel& model, const hivg::Corpus& corpus, TrainConfig config);

  // One optimizer step on a batch drawn from (seed, iteration).
  LossReport step();
  void run(const std::function<void(int, const LossReport&)>& on_step = {});
  int iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  std::vector<TrainSample> batch_at(int iteration) const;

  nlohmann::json optimizer_state() const;
  void load_state(int iteration, const nlohmann::json& optimizer);

 private:
  GroundingModel* model_;
  const hivg::Corpus* corpus_;
  TrainConfig config_;
  std::vector<std::pair<const hivg::Scene*, const hivg::CaptionChain*>> pairs_;
  diff::AdamW optimizer_;
  int iteration_ = 0;
};

}  // namespace tase::grounder
