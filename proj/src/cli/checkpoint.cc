#include "tase/cli/checkpoint.h"

#include <fstream>

namespace tase::cli {

nlohmann::json Checkpoint::to_json() const {
  return {{"schema", kCheckpointSchema}, {"config_hash", config_hash}, {"iteration", iteration},
          {"config", config},           {"params", params},           {"optimizer", optimizer}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != kCheckpointSchema) throw CheckpointError("checkpoint: unsupported schema");
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::string>();
    c.iteration = j.at("iteration").get<int>();
    c.config = j.at("config");
    c.params = j.at("params");
    c.optimizer = j.at("optimizer");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("checkpoint: " + path + ": " + e.what());
  }
}

void Checkpoint::check_compatible(const RunConfig& config) const {
  const std::string h = model_hash(config);
  if (h != config_hash) {
    throw CheckpointError("incompatible checkpoint: model hash " + config_hash + " but config gives " + h);
  }
}

}  // namespace tase::cli
