#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "tase/diff/graph.h"
#include "tase/hivg/scene.h"

namespace tase::grounder {

using diff::Var;

class DegenerateBoxError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ScoreResult {
  std::vector<double> logits;
  std::vector<double> probabilities;
};

// logit_i = cos(query, feature_i) / tau, probability = sigmoid(logit).
ScoreResult score(std::span<const double> query, const std::vector<std::vector<double>>& features, double tau);
// Graph form over an N x D constant or variable feature matrix; returns N logits.
Var score_logits(Var query, Var features, double tau);

// Mean over entries of -alpha (1 - p_t)^gamma log p_t with p_t = p for
// y = 1 and 1 - p for y = 0.
double focal_loss(std::span<const double> probabilities, std::span<const double> labels, double gamma = 2.0,
                  double alpha = 0.25);
// Same loss from logits; labels are constants.
Var focal_loss_logits(Var logits, std::span<const double> labels, double gamma = 2.0, double alpha = 0.25);

double giou(const hivg::Box& a, const hivg::Box& b);
double giou_loss(const hivg::Box& pred, const hivg::Box& gt);
double l1_box_loss(const hivg::Box& pred, const hivg::Box& gt);

// Graph boxes as four scalars.
struct BoxVars {
  Var x0, y0, x1, y1;
};
BoxVars box_vars(Var box4);
Var giou_loss(const BoxVars& pred, const hivg::Box& gt);
Var l1_box_loss(const BoxVars& pred, const hivg::Box& gt);

// InfoNCE averaged over positives: -log(exp(s+/tau) / (exp(s+/tau) + sum_neg exp(s-/tau))),
// with s the cosine similarity to the query.
Var contrastive_baseline(Var query, std::span<const Var> positives, std::span<const Var> negatives, double tau);
double contrastive_baseline(std::span<const double> query, const std::vector<std::vector<double>>& positives,
                            const std::vector<std::vector<double>>& negatives, double tau);

}  // namespace tase::grounder
