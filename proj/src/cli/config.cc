#include "tase/cli/config.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace tase::cli {

namespace {

// Visits every field in file order; the key is the JSON name.
template <class C, class F>
void fields(C& c, F&& f) {
  f("seed", c.seed);
  f("data_dir", c.data_dir);
  f("data_seed", c.data_seed);
  f("train_scenes", c.train_scenes);
  f("eval_scenes", c.eval_scenes);
  f("chains_per_scene", c.chains_per_scene);
  f("min_objects", c.min_objects);
  f("max_objects", c.max_objects);
  f("min_tier3_words", c.min_tier3_words);
  f("d_model", c.d_model);
  f("dim", c.dim);
  f("t_max", c.t_max);
  f("heads", c.heads);
  f("ffn_hidden", c.ffn_hidden);
  f("lora_rank", c.lora_rank);
  f("lora_alpha", c.lora_alpha);
  f("components", c.components);
  f("placement", c.placement);
  f("attention", c.attention);
  f("init", c.init);
  f("lexical_prior", c.lexical_prior);
  f("fusion", c.fusion);
  f("fusion_hidden", c.fusion_hidden);
  f("center_on_root", c.center_on_root);
  f("tau", c.tau);
  f("vision_seed", c.vision_seed);
  f("vision_attribute_weight", c.vision_attribute_weight);
  f("vision_relation_weight", c.vision_relation_weight);
  f("lr_module", c.lr_module);
  f("lr_adapter", c.lr_adapter);
  f("weight_decay", c.weight_decay);
  f("images_per_batch", c.images_per_batch);
  f("sentences_per_image", c.sentences_per_image);
  f("iterations", c.iterations);
  f("eval_every", c.eval_every);
  f("checkpoint_every", c.checkpoint_every);
  f("loss_mode", c.loss_mode);
  f("w_class", c.w_class);
  f("w_bbox", c.w_bbox);
  f("w_giou", c.w_giou);
  f("w_tase", c.w_tase);
  f("lambda", c.lambda);
  f("margin", c.margin);
  f("epsilon", c.epsilon);
  f("normalize", c.normalize);
  f("cosine_distance", c.cosine_distance);
  f("reference", c.reference);
  f("focal_gamma", c.focal_gamma);
  f("focal_alpha", c.focal_alpha);
  f("cl_tau", c.cl_tau);
  f("pos_neg_ratio_h", c.pos_neg_ratio_h);
  f("pos_neg_ratio_re", c.pos_neg_ratio_re);
  f("noise_std", c.noise_std);
  f("box_jitter", c.box_jitter);
  f("iou_threshold", c.iou_threshold);
  f("operating_point", c.operating_point);
  f("eval_seed", c.eval_seed);
  f("angle_bins", c.angle_bins);
  f("ablate_modes", c.ablate_modes);
  f("ablate_components", c.ablate_components);
  f("ablate_placements", c.ablate_placements);
  f("ablate_attention", c.ablate_attention);
  f("ablate_seeds", c.ablate_seeds);
}

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

void check_ratio(const std::string& field, const std::string& v) {
  unsigned a = 0, b = 0;
  char tail = 0;
  if (std::sscanf(v.c_str(), "%u:%u%c", &a, &b, &tail) != 2 || a == 0 || b == 0) {
    fail(field, "expected a ratio like 2:1, got '" + v + "'");
  }
}

template <class Parse>
void check_enum(const std::string& field, const std::string& v, Parse parse) {
  try {
    parse(v);
  } catch (const std::invalid_argument& e) {
    fail(field, e.what());
  }
}

void positive(const std::string& field, double v) {
  if (!(v > 0.0)) fail(field, "must be positive");
}

void non_negative(const std::string& field, double v) {
  if (!(v >= 0.0)) fail(field, "must be non-negative");
}

}  // namespace

void RunConfig::validate() const {
  check_enum("loss_mode", loss_mode, grounder::parse_mode);
  check_enum("placement", placement, tride::parse_placement);
  check_enum("attention", attention, tride::parse_attention);
  check_enum("init", init, tride::parse_init);
  if (reference != "dynamic" && reference != "global") fail("reference", "expected dynamic or global");
  for (const auto& m : ablate_modes) check_enum("ablate_modes", m, grounder::parse_mode);
  for (const auto& p : ablate_placements) check_enum("ablate_placements", p, tride::parse_placement);
  for (const auto& a : ablate_attention) check_enum("ablate_attention", a, tride::parse_attention);
  if (components < 1 || components > 3) fail("components", "must be 1, 2 or 3");
  for (int c : ablate_components) {
    if (c < 1 || c > 3) fail("ablate_components", "entries must be 1, 2 or 3");
  }
  check_ratio("pos_neg_ratio_h", pos_neg_ratio_h);
  check_ratio("pos_neg_ratio_re", pos_neg_ratio_re);
  if (data_dir.empty()) fail("data_dir", "must not be empty");
  if (train_scenes < 1) fail("train_scenes", "must be positive");
  if (eval_scenes < 1) fail("eval_scenes", "must be positive");
  if (chains_per_scene < 1) fail("chains_per_scene", "must be positive");
  if (min_objects < 2) fail("min_objects", "must be at least 2");
  if (max_objects < min_objects) fail("max_objects", "must be at least min_objects");
  if (min_tier3_words < 1) fail("min_tier3_words", "must be positive");
  if (d_model == 0) fail("d_model", "must be positive");
  if (dim == 0) fail("dim", "must be positive");
  if (t_max == 0) fail("t_max", "must be positive");
  if (heads == 0 || dim % heads != 0) fail("heads", "must divide dim");
  if (ffn_hidden == 0) fail("ffn_hidden", "must be positive");
  if (lora_rank == 0) fail("lora_rank", "must be positive");
  positive("lora_alpha", lora_alpha);
  if (lexical_prior && d_model != dim) fail("lexical_prior", "needs d_model == dim");
  if (fusion && fusion_hidden == 0) fail("fusion_hidden", "must be positive");
  positive("tau", tau);
  non_negative("vision_attribute_weight", vision_attribute_weight);
  non_negative("vision_relation_weight", vision_relation_weight);
  non_negative("lr_module", lr_module);
  non_negative("lr_adapter", lr_adapter);
  non_negative("weight_decay", weight_decay);
  if (images_per_batch < 1) fail("images_per_batch", "must be positive");
  if (sentences_per_image != 6) fail("sentences_per_image", "chains carry exactly 6 sentences (3 tiers x pos/neg)");
  if (iterations < 0) fail("iterations", "must be non-negative");
  if (eval_every < 0) fail("eval_every", "must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be non-negative");
  for (auto [k, v] : {std::pair{"w_class", w_class}, {"w_bbox", w_bbox}, {"w_giou", w_giou}, {"w_tase", w_tase},
                      {"lambda", lambda}, {"margin", margin}, {"focal_gamma", focal_gamma}}) {
    non_negative(k, v);
  }
  positive("epsilon", epsilon);
  positive("focal_alpha", focal_alpha);
  positive("cl_tau", cl_tau);
  non_negative("noise_std", noise_std);
  non_negative("box_jitter", box_jitter);
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) fail("iou_threshold", "must lie in (0, 1]");
  if (!(operating_point > 0.0 && operating_point < 1.0)) fail("operating_point", "must lie in (0, 1)");
  if (angle_bins < 1) fail("angle_bins", "must be positive");
  if (ablate_seeds.empty()) fail("ablate_seeds", "must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kConfigSchema;
  fields(*this, [&](const char* k, const auto& v) { j[k] = v; });
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  std::set<std::string> known{"schema_version"};
  fields(c, [&](const char* k, auto&) { known.insert(k); });
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) fail(k, "unknown key");
  }
  if (j.contains("schema_version") && j["schema_version"] != kConfigSchema) {
    fail("schema_version", "expected " + std::string(kConfigSchema));
  }
  fields(c, [&](const char* k, auto& v) {
    if (!j.contains(k)) return;
    const auto& x = j.at(k);
    using T = std::decay_t<decltype(v)>;
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = x.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = x.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = x.is_number();
    } else if constexpr (std::is_integral_v<T>) {
      ok = x.is_number_unsigned() || (x.is_number_integer() && (std::is_signed_v<T> || x.get<std::int64_t>() >= 0));
    } else {
      ok = x.is_array();
    }
    if (!ok) fail(k, "wrong type " + std::string(x.type_name()));
    try {
      v = x.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(k, e.what());
    }
  });
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

namespace {
std::string under(const std::string& dir, const char* file) { return (std::filesystem::path(dir) / file).string(); }
}  // namespace

std::string RunConfig::train_chains_path() const { return under(data_dir, "train_chains.jsonl"); }
std::string RunConfig::train_scenes_path() const { return under(data_dir, "train_scenes.jsonl"); }
std::string RunConfig::eval_chains_path() const { return under(data_dir, "eval_chains.jsonl"); }
std::string RunConfig::eval_scenes_path() const { return under(data_dir, "eval_scenes.jsonl"); }

grounder::ModelConfig RunConfig::model_config() const {
  grounder::ModelConfig m;
  m.encoder.d_model = d_model;
  m.encoder.lora_rank = lora_rank;
  m.encoder.lora_alpha = lora_alpha;
  m.encoder.seed = hivg::derive_seed(seed, 0, 1);
  m.tride.d_model = d_model;
  m.tride.dim = dim;
  m.tride.heads = heads;
  m.tride.slots = t_max;
  m.tride.ffn_hidden = ffn_hidden;
  m.tride.components = components;
  m.tride.placement = tride::parse_placement(placement);
  m.tride.attention = tride::parse_attention(attention);
  m.tride.init = tride::parse_init(init);
  m.tride.seed = hivg::derive_seed(seed, 0, 2);
  m.vision.dim = dim;
  m.vision.attribute_weight = vision_attribute_weight;
  m.vision.relation_weight = vision_relation_weight;
  m.vision.seed = vision_seed;
  m.lexical_prior = lexical_prior;
  m.fusion = fusion;
  m.fusion_hidden = fusion_hidden;
  m.center_on_root = center_on_root;
  m.tau = tau;
  return m;
}

grounder::TrainConfig RunConfig::train_config() const {
  grounder::TrainConfig t;
  t.mode = grounder::parse_mode(loss_mode);
  t.weights = {w_class, w_bbox, w_giou, w_tase, lambda};
  t.tride_loss.margin = margin;
  t.tride_loss.lambda = lambda;
  t.tride_loss.cosine_distance = cosine_distance;
  t.hier.epsilon = epsilon;
  t.hier.normalize = normalize;
  t.reference = reference == "global" ? geometry::ReferenceMode::kGlobal : geometry::ReferenceMode::kDynamic;
  t.lr_module = lr_module;
  t.lr_adapter = lr_adapter;
  t.weight_decay = weight_decay;
  t.iterations = iterations;
  t.batch_chains = images_per_batch;
  t.noise_std = noise_std;
  t.box_jitter = box_jitter;
  t.focal_gamma = focal_gamma;
  t.focal_alpha = focal_alpha;
  t.cl_tau = cl_tau;
  t.seed = hivg::derive_seed(seed, 0, 3);
  return t;
}

grounder::EvalOptions RunConfig::eval_options() const {
  grounder::EvalOptions e;
  e.iou_threshold = iou_threshold;
  e.operating_point = operating_point;
  e.noise_std = noise_std;
  e.box_jitter = box_jitter;
  e.seed = eval_seed;
  e.angle_bins = angle_bins;
  return e;
}

hivg::GenConfig RunConfig::gen_config(bool eval) const {
  hivg::GenConfig g;
  g.seed = hivg::derive_seed(data_seed, 0, eval ? 12 : 11);
  g.scenes = eval ? eval_scenes : train_scenes;
  g.chains_per_scene = chains_per_scene;
  g.scene.min_objects = min_objects;
  g.scene.max_objects = max_objects;
  g.chain.min_tier3_words = min_tier3_words;
  return g;
}

RunConfig ablation_preset() {
  RunConfig c;
  c.iterations = 1000;
  c.lr_module = 3e-3;
  c.lr_adapter = 3e-3;
  c.images_per_batch = 8;
  c.w_tase = 0.05;
  return c;
}

std::string model_hash(const RunConfig& c) {
  nlohmann::json j{{"d_model", c.d_model},
                   {"dim", c.dim},
                   {"t_max", c.t_max},
                   {"heads", c.heads},
                   {"ffn_hidden", c.ffn_hidden},
                   {"lora_rank", c.lora_rank},
                   {"lora_alpha", c.lora_alpha},
                   {"components", c.components},
                   {"placement", c.placement},
                   {"attention", c.attention},
                   {"lexical_prior", c.lexical_prior},
                   {"fusion", c.fusion},
                   {"fusion_hidden", c.fusion_hidden},
                   {"center_on_root", c.center_on_root},
                   {"tau", c.tau},
                   {"vision_seed", c.vision_seed},
                   {"vision_attribute_weight", c.vision_attribute_weight},
                   {"vision_relation_weight", c.vision_relation_weight}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tase::cli
