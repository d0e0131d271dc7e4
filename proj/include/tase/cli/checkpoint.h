#pragma once

#include <string>

#include "json.hpp"
#include "tase/cli/config.h"
#include "tase/grounder/model.h"

namespace tase::cli {

inline constexpr const char* kCheckpointSchema = "tase.checkpoint/1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string config_hash;
  int iteration = 0;
  nlohmann::json config;
  nlohmann::json params;
  nlohmann::json optimizer;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Throws CheckpointError when the model shape differs from `config`.
  void check_compatible(const RunConfig& config) const;
};

}  // namespace tase::cli
