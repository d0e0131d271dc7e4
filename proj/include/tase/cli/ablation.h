#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tase/cli/config.h"
#include "tase/grounder/eval.h"

namespace tase::cli {

std::unique_ptr<grounder::GroundingModel> build_model(const RunConfig& config);

struct Corpora {
  hivg::Corpus train;
  hivg::Corpus eval;
};
Corpora generate_corpora(const RunConfig& config);
Corpora load_corpora(const RunConfig& config);

// Trains one model from scratch under `config` and evaluates it.
grounder::Metrics run_variant(const RunConfig& config, const Corpora& data);

struct Variant {
  std::string name;
  RunConfig config;
};

// Cartesian product of the non-empty ablate_* axes over the base config.
std::vector<Variant> ablation_grid(const RunConfig& base);

struct VariantResult {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<grounder::Metrics> runs;  // one per seed
  double median_ap = 0.0;
};

double median(std::vector<double> v);

using Progress = std::function<void(const std::string& variant, std::uint64_t seed, const grounder::Metrics&)>;

// Every variant is trained once per seed of the base config's ablate_seeds;
// results come back sorted by descending median AP.
std::vector<VariantResult> ablate(const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                  const Corpora& data, const Progress& progress = {});

std::string ranked_table(const std::vector<VariantResult>& results);
nlohmann::json results_to_json(const std::vector<VariantResult>& results);

}  // namespace tase::cli
