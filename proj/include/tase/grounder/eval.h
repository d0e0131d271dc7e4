#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tase/grounder/model.h"
#include "tase/hivg/corpus.h"

namespace tase::grounder {

struct EvalOptions {
  double iou_threshold = 0.5;
  double operating_point = 0.5;
  double noise_std = 0.1;
  double box_jitter = 0.05;
  std::uint64_t seed = 1000;
  int angle_bins = 18;
};

struct TierStats {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0;
};

// Bins over [0, pi] of the plain exterior angle with the dynamic reference:
// positive = consecutive-tier positives, negative = same-tier pos/neg.
struct AngleHistogram {
  std::vector<double> edges;
  std::vector<int> positive, negative;
  double mean_positive = 0.0, mean_negative = 0.0;
};

struct Metrics {
  double ap_c = 0.0;  // tier-1 queries
  double ap_d = 0.0;  // tier-3 queries
  double ap = 0.0;    // geometric mean
  std::array<TierStats, 3> tiers;
  std::size_t queries = 0;
  AngleHistogram angles;

  nlohmann::json to_json() const;
  std::string csv() const;        // metric,name,value
  std::string angle_csv() const;  // bin_low,bin_high,count_pos,count_neg
};

// A scored prediction and whether it matched an unclaimed ground truth.
double average_precision_11(std::vector<std::pair<double, bool>> predictions, std::size_t ground_truth);

using Detector =
    std::function<DetectionOutput(const std::string& caption, const hivg::Scene& scene, const std::vector<Proposal>&)>;

// Ground-truth indicator scores and exact boxes.
Detector oracle_detector();
Detector model_detector(const GroundingModel& model);

// Every chain contributes its six captions as queries over the proposals of
// its scene. Throws std::invalid_argument for an empty evaluation set.
Metrics evaluate(const Detector& detector, const hivg::Corpus& eval, const VisionEncoder& vision,
                 const EvalOptions& options = {});
// Adds the angle histogram from the model's embeddings.
Metrics evaluate(const GroundingModel& model, const hivg::Corpus& eval, const EvalOptions& options = {});

AngleHistogram angle_histogram(const GroundingModel& model, const hivg::Corpus& eval, int bins = 18);

// Component statistics over every caption of every chain. Identity holds for
// a chain when cos(O of tier-1 pos, O of tier-2 pos) exceeds
// cos(O of tier-1 pos, O of tier-1 neg).
struct DisentangleStats {
  double mean_abs_dot = 0.0;  // mean pairwise |i . j| of pooled components
  double identity_rate = 0.0;
  std::size_t chains = 0;

  nlohmann::json to_json() const;
};
DisentangleStats disentanglement(const GroundingModel& model, const hivg::Corpus& corpus);

}  // namespace tase::grounder
