#include "tase/grounder/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tase/diff/ops.h"

namespace tase::grounder {

using diff::Graph;
using diff::Tensor;
using tride::ParamGroup;

void ModelConfig::validate() const {
  tride.validate();
  if (encoder.d_model != tride.d_model) {
    throw std::invalid_argument("model: encoder d_model " + std::to_string(encoder.d_model) + " != TriDe d_model " +
                                std::to_string(tride.d_model));
  }
  if (tride.dim != vision.dim) {
    throw std::invalid_argument("model: TriDe dim " + std::to_string(tride.dim) + " != vision dim " +
                                std::to_string(vision.dim));
  }
  if (lexical_prior && encoder.d_model != vision.dim) {
    throw std::invalid_argument("model: the lexical prior needs d_model == D");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("model: tau must be positive");
  if (fusion && fusion_hidden == 0) throw std::invalid_argument("model: fusion_hidden must be positive");
}

tride::Vocabulary caption_vocabulary(const hivg::VocabTables& tables) { return tride::Vocabulary(tables.tokens()); }

GroundingModel::GroundingModel(ModelConfig config, const hivg::VocabTables& tables)
    : config_(std::move(config)), store_(std::make_unique<ParamStore>()), vision_(config_.vision, tables) {
  config_.validate();
  tride::LexicalPrior prior;
  if (config_.lexical_prior) prior = vision_.lexical_prior();
  encoder_ = std::make_unique<tride::EncoderStub>(caption_vocabulary(tables), config_.encoder, *store_, prior);
  tride::init_tride(config_.tride, *store_);
  const std::size_t d = config_.tride.dim;
  std::mt19937_64 rng(config_.tride.seed ^ 0x5eedULL);
  if (config_.fusion) {
    const std::size_t h = config_.fusion_hidden;
    Tensor w1(diff::Shape{d, h});
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    for (double& v : w1.values()) v = n(rng);
    store_->add("fusion.w1", std::move(w1), ParamGroup::kModule);
    store_->add("fusion.b1", Tensor(diff::Shape{h}), ParamGroup::kModule);
    store_->add("fusion.w2", Tensor(diff::Shape{h, d}), ParamGroup::kModule);
    store_->add("fusion.b2", Tensor(diff::Shape{d}), ParamGroup::kModule);
  }
  store_->add("box.w", Tensor(diff::Shape{d, 4}), ParamGroup::kModule);
  store_->add("box.b", Tensor(diff::Shape{4}), ParamGroup::kModule);

  Graph g;
  Binder b(g, *store_);
  Var x = encoder_->encode_ids(b, {encoder_->vocab().root_id()});
  const Tensor& e = tride::tride_forward(b, config_.tride, x).embedding.value();
  root_.assign(e.values().begin(), e.values().end());
  store_->add("root", Tensor::vector(root_), ParamGroup::kFrozen);
  store_->zero_grad();
}

GroundingModel::Embedding GroundingModel::embed(Binder& b, const std::string& caption) const {
  Embedding out{tride::tride_forward(b, config_.tride, encoder_->encode(b, caption)), {}};
  out.query = out.tride.embedding;
  if (config_.center_on_root) out.query = diff::sub(out.query, b("root"));
  if (config_.fusion) {
    Var h = diff::gelu(diff::affine(out.query, b("fusion.w1"), b("fusion.b1")));
    out.query = diff::add(out.query, diff::affine(h, b("fusion.w2"), b("fusion.b2")));
  }
  return out;
}

std::vector<double> GroundingModel::embed_value(const std::string& caption) const {
  Graph g;
  Binder b(g, *store_);
  const Tensor& e = tride::tride_forward(b, config_.tride, encoder_->encode(b, caption)).embedding.value();
  return {e.values().begin(), e.values().end()};
}

tride::TriDeOutput GroundingModel::components_value(Binder& b, const std::string& caption) const {
  return tride::tride_forward(b, config_.tride, encoder_->encode(b, caption));
}

std::vector<std::vector<double>> GroundingModel::pooled_components(const std::string& caption) const {
  Graph g;
  Binder b(g, *store_);
  std::vector<std::vector<double>> out;
  for (const Var& c : components_value(b, caption).components.pooled) {
    out.emplace_back(c.value().values().begin(), c.value().values().end());
  }
  return out;
}

namespace {

// Deltas (dx, dy, dw, dh) relative to the proposal's centre and size.
hivg::Box apply_deltas(const hivg::Box& p, const double* d) {
  const double cx = p.cx() + d[0] * p.width(), cy = p.cy() + d[1] * p.height();
  const double w = p.width() * std::exp(d[2]), h = p.height() * std::exp(d[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace

BoxVars GroundingModel::refine_box(Binder& b, const Proposal& p) const {
  Graph& g = b.graph();
  Var d = diff::affine(g.constant(Tensor::vector(p.feature)), b("box.w"), b("box.b"));
  Var cx = diff::add_scalar(diff::scale(diff::element(d, 0), p.box.width()), p.box.cx());
  Var cy = diff::add_scalar(diff::scale(diff::element(d, 1), p.box.height()), p.box.cy());
  Var hw = diff::scale(diff::exp(diff::element(d, 2)), 0.5 * p.box.width());
  Var hh = diff::scale(diff::exp(diff::element(d, 3)), 0.5 * p.box.height());
  return {diff::sub(cx, hw), diff::sub(cy, hh), diff::add(cx, hw), diff::add(cy, hh)};
}

hivg::Box GroundingModel::refine_box(const Proposal& p) const {
  const Tensor& w = store_->at("box.w");
  const Tensor& bias = store_->at("box.b");
  if (p.feature.size() != w.shape()[0]) throw diff::ShapeError("refine_box: feature dimension mismatch");
  double d[4];
  for (std::size_t j = 0; j < 4; ++j) {
    d[j] = bias[j];
    for (std::size_t i = 0; i < p.feature.size(); ++i) d[j] += p.feature[i] * w.at(i, j);
  }
  return apply_deltas(p.box, d);
}

DetectionOutput GroundingModel::detect(const std::string& caption, const std::vector<Proposal>& proposals) const {
  Graph g;
  Binder b(g, *store_);
  const Tensor& q = embed(b, caption).query.value();
  std::vector<std::vector<double>> feats;
  for (const auto& p : proposals) feats.push_back(p.feature);
  DetectionOutput out;
  out.scores = score(q.values(), feats, config_.tau).probabilities;
  for (const auto& p : proposals) out.boxes.push_back(refine_box(p));
  out.ranking.resize(proposals.size());
  std::iota(out.ranking.begin(), out.ranking.end(), 0);
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t c) { return out.scores[a] > out.scores[c]; });
  return out;
}

}  // namespace tase::grounder
