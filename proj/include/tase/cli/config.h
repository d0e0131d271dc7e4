#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tase/grounder/eval.h"
#include "tase/grounder/train.h"
#include "tase/hivg/corpus.h"

namespace tase::cli {

inline constexpr const char* kConfigSchema = "tase.config/1";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat run configuration. Every key is optional in the file; unknown keys and
// bad enumerations are rejected with the offending field named.
struct RunConfig {
  std::uint64_t seed = 0;  // model init, batch order and proposal noise

  // corpus
  std::string data_dir = "data";
  std::uint64_t data_seed = 7;
  int train_scenes = 500;
  int eval_scenes = 200;
  int chains_per_scene = 1;
  int min_objects = 3;
  int max_objects = 6;
  int min_tier3_words = 4;

  // model
  std::size_t d_model = 32;
  std::size_t dim = 32;
  std::size_t t_max = 4;  // rows of each learnable component set
  std::size_t heads = 2;
  std::size_t ffn_hidden = 64;
  std::size_t lora_rank = 16;
  double lora_alpha = 16.0;  // adapter scale is alpha / rank
  int components = 3;
  std::string placement = "token-level";
  std::string attention = "learnable-key-value";
  std::string init = "identity";
  bool lexical_prior = true;
  bool fusion = true;
  std::size_t fusion_hidden = 64;
  bool center_on_root = true;
  double tau = 0.07;
  std::uint64_t vision_seed = 3;
  double vision_attribute_weight = 0.6;
  double vision_relation_weight = 0.6;

  // optimization
  double lr_module = 1e-4;
  double lr_adapter = 5e-6;
  double weight_decay = 0.01;
  int images_per_batch = 16;
  int sentences_per_image = 6;
  int iterations = 200;
  int eval_every = 0;  // 0 = only at the end
  int checkpoint_every = 0;

  // losses
  std::string loss_mode = "H";
  double w_class = 4.0;
  double w_bbox = 5.0;
  double w_giou = 2.0;
  double w_tase = 5.0;
  double lambda = 0.1;
  double margin = 0.2;
  double epsilon = 1e-8;
  bool normalize = true;
  bool cosine_distance = true;
  std::string reference = "dynamic";
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double cl_tau = 0.07;
  std::string pos_neg_ratio_h = "2:1";
  std::string pos_neg_ratio_re = "10:4";

  // proposals and evaluation
  double noise_std = 0.1;
  double box_jitter = 0.05;
  double iou_threshold = 0.5;
  double operating_point = 0.5;
  std::uint64_t eval_seed = 1000;
  int angle_bins = 18;

  // ablation grid; empty axes keep the base value
  std::vector<std::string> ablate_modes{"CL", "RE", "H", "H+only", "H-only", "reverse-H", "base"};
  std::vector<int> ablate_components{};
  std::vector<std::string> ablate_placements{};
  std::vector<std::string> ablate_attention{};
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2};

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);

  std::string train_chains_path() const;
  std::string train_scenes_path() const;
  std::string eval_chains_path() const;
  std::string eval_scenes_path() const;

  grounder::ModelConfig model_config() const;
  grounder::TrainConfig train_config() const;
  grounder::EvalOptions eval_options() const;
  hivg::GenConfig gen_config(bool eval) const;
};

// Settings of the synthetic ablation benchmark shared by every variant.
RunConfig ablation_preset();

// Hex FNV-1a of the fields that fix parameter names and shapes.
std::string model_hash(const RunConfig& c);

}  // namespace tase::cli
