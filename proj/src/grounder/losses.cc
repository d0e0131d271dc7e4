#include "tase/grounder/losses.h"

#include <cmath>
#include <string>

#include "tase/diff/ops.h"

namespace tase::grounder {

using diff::Graph;
using diff::Tensor;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw diff::ShapeError("score: dimension mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d / (norm(a) * norm(b));
}

void check_box(const hivg::Box& b, const char* what) {
  if (!(b.width() > 0.0) || !(b.height() > 0.0)) throw DegenerateBoxError(std::string(what) + ": box has no area");
}

}  // namespace

ScoreResult score(std::span<const double> query, const std::vector<std::vector<double>>& features, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("score: tau must be positive");
  ScoreResult r;
  for (const auto& f : features) {
    const double z = cosine(query, f) / tau;
    r.logits.push_back(z);
    r.probabilities.push_back(1.0 / (1.0 + std::exp(-z)));
  }
  return r;
}

Var score_logits(Var query, Var features, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("score: tau must be positive");
  if (features.shape().size() != 2 || features.shape()[1] != query.size()) {
    throw diff::ShapeError("score: features " + diff::shape_string(features.shape()) + " vs query " +
                           diff::shape_string(query.shape()));
  }
  Var q = diff::div_scalar(query, diff::l2_norm(query));
  Var n = diff::l2_norm(features);  // per-row norms
  Var dots = diff::matmul(features, diff::transpose(diff::as_matrix(q)));  // N x 1
  Var cos = diff::mul(diff::transpose(dots), diff::as_matrix(diff::pow_scalar(n, -1.0)));
  return diff::scale(diff::row(cos, 0), 1.0 / tau);
}

double focal_loss(std::span<const double> p, std::span<const double> y, double gamma, double alpha) {
  if (p.size() != y.size() || p.empty()) throw std::invalid_argument("focal_loss: need matching non-empty inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0)) {
      throw std::domain_error("focal_loss: probability " + std::to_string(p[i]) + " outside (0, 1)");
    }
    const double pt = y[i] * p[i] + (1.0 - y[i]) * (1.0 - p[i]);
    total += -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return total / static_cast<double>(p.size());
}

Var focal_loss_logits(Var logits, std::span<const double> y, double gamma, double alpha) {
  if (logits.size() != y.size() || y.empty()) throw std::invalid_argument("focal_loss: need matching non-empty inputs");
  Graph& g = *logits.graph();
  Tensor sign(logits.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("focal_loss: labels must be 0 or 1");
    sign[i] = 2.0 * y[i] - 1.0;
  }
  // p_t = sigmoid(sign * z) exactly for binary labels.
  Var signed_z = diff::mul(logits, g.constant(sign));
  Var pt = diff::sigmoid(signed_z);
  Var log_pt = diff::log(pt);
  Var w = gamma == 0.0 ? g.constant(Tensor(logits.shape(), 1.0))
                       : diff::pow_scalar(diff::sigmoid(diff::neg(signed_z)), gamma);
  return diff::scale(diff::sum(diff::mul(w, log_pt)), -alpha / static_cast<double>(y.size()));
}

double giou(const hivg::Box& a, const hivg::Box& b) {
  check_box(a, "giou");
  check_box(b, "giou");
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  const double enc = (std::max(a.x1, b.x1) - std::min(a.x0, b.x0)) * (std::max(a.y1, b.y1) - std::min(a.y0, b.y0));
  return inter / uni - (enc - uni) / enc;
}

double giou_loss(const hivg::Box& pred, const hivg::Box& gt) { return 1.0 - giou(pred, gt); }

double l1_box_loss(const hivg::Box& p, const hivg::Box& g) {
  return (std::fabs(p.x0 - g.x0) + std::fabs(p.y0 - g.y0) + std::fabs(p.x1 - g.x1) + std::fabs(p.y1 - g.y1)) / 4.0;
}

BoxVars box_vars(Var b) {
  if (b.size() != 4) throw diff::ShapeError("box_vars: expected 4 coordinates, got " + diff::shape_string(b.shape()));
  return {diff::element(b, 0), diff::element(b, 1), diff::element(b, 2), diff::element(b, 3)};
}

Var giou_loss(const BoxVars& p, const hivg::Box& gt) {
  check_box(gt, "giou_loss");
  Graph& g = *p.x0.graph();
  auto c = [&](double v) { return g.constant(Tensor::scalar(v)); };
  Var w = diff::sub(p.x1, p.x0), h = diff::sub(p.y1, p.y0);
  if (!(w.item() > 0.0) || !(h.item() > 0.0)) throw DegenerateBoxError("giou_loss: predicted box has no area");
  Var ix = diff::relu(diff::sub(diff::minimum(p.x1, c(gt.x1)), diff::maximum(p.x0, c(gt.x0))));
  Var iy = diff::relu(diff::sub(diff::minimum(p.y1, c(gt.y1)), diff::maximum(p.y0, c(gt.y0))));
  Var inter = diff::mul(ix, iy);
  Var uni = diff::sub(diff::add_scalar(diff::mul(w, h), gt.area()), inter);
  Var ex = diff::sub(diff::maximum(p.x1, c(gt.x1)), diff::minimum(p.x0, c(gt.x0)));
  Var ey = diff::sub(diff::maximum(p.y1, c(gt.y1)), diff::minimum(p.y0, c(gt.y0)));
  Var enc = diff::mul(ex, ey);
  Var iou = diff::div_scalar(inter, uni);
  Var penalty = diff::div_scalar(diff::sub(enc, uni), enc);
  return diff::add_scalar(diff::sub(penalty, iou), 1.0);
}

Var l1_box_loss(const BoxVars& p, const hivg::Box& gt) {
  Var s = diff::add(diff::add(diff::abs(diff::add_scalar(p.x0, -gt.x0)), diff::abs(diff::add_scalar(p.y0, -gt.y0))),
                    diff::add(diff::abs(diff::add_scalar(p.x1, -gt.x1)), diff::abs(diff::add_scalar(p.y1, -gt.y1))));
  return diff::scale(s, 0.25);
}

Var contrastive_baseline(Var query, std::span<const Var> pos, std::span<const Var> neg, double tau) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("contrastive_baseline: needs a positive and a negative");
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_baseline: tau must be positive");
  std::vector<Var> neg_s;
  for (Var n : neg) neg_s.push_back(diff::scale(diff::cosine_similarity(query, n), 1.0 / tau));
  Var total = query.graph()->constant(Tensor::scalar(0.0));
  for (Var p : pos) {
    Var sp = diff::scale(diff::cosine_similarity(query, p), 1.0 / tau);
    std::vector<Var> all{sp};
    all.insert(all.end(), neg_s.begin(), neg_s.end());
    total = diff::add(total, diff::sub(diff::logsumexp(diff::concat(all)), sp));
  }
  return diff::scale(total, 1.0 / static_cast<double>(pos.size()));
}

double contrastive_baseline(std::span<const double> query, const std::vector<std::vector<double>>& pos,
                            const std::vector<std::vector<double>>& neg, double tau) {
  Graph g;
  Var q = g.constant(Tensor::vector(std::vector<double>(query.begin(), query.end())));
  std::vector<Var> p, n;
  for (const auto& v : pos) p.push_back(g.constant(Tensor::vector(v)));
  for (const auto& v : neg) n.push_back(g.constant(Tensor::vector(v)));
  return contrastive_baseline(q, p, n, tau).item();
}

}  // namespace tase::grounder
