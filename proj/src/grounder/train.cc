#include "tase/grounder/train.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "tase/diff/ops.h"

namespace tase::grounder {

using diff::Graph;
using diff::Tensor;

const char* mode_name(LossMode m) {
  switch (m) {
    case LossMode::kBase:
      return "base";
    case LossMode::kCL:
      return "CL";
    case LossMode::kRE:
      return "RE";
    case LossMode::kH:
      return "H";
    case LossMode::kHPosOnly:
      return "H+only";
    case LossMode::kHNegOnly:
      return "H-only";
    case LossMode::kReverseH:
      return "reverse-H";
  }
  return "?";
}

std::vector<LossMode> all_modes() {
  return {LossMode::kBase, LossMode::kCL,       LossMode::kRE,      LossMode::kH,
          LossMode::kHPosOnly, LossMode::kHNegOnly, LossMode::kReverseH};
}

LossMode parse_mode(const std::string& s) {
  for (LossMode m : all_modes()) {
    if (s == mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown loss mode '" + s + "' (base, CL, RE, H, H+only, H-only, reverse-H)");
}

void LossWeights::validate() const {
  for (double w : {cls, bbox, giou, tase, lambda}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
}

double total_loss(double cls, double bbox, double giou, double tase, const LossWeights& w) {
  return w.cls * cls + w.bbox * bbox + w.giou * giou + w.tase * tase;
}

double LossReport::weighted(const LossWeights& w) const { return total_loss(cls, bbox, giou, tase, w); }

nlohmann::json LossReport::to_json() const {
  return {{"cls", cls},
          {"bbox", bbox},
          {"giou", giou},
          {"tride", tride},
          {"orthogonality", orthogonality},
          {"margin", margin},
          {"sentence_pos", sentence_pos},
          {"sentence_neg", sentence_neg},
          {"tase", tase},
          {"total", total}};
}

void TrainConfig::validate() const {
  weights.validate();
  if (!(lr_module >= 0.0) || !(lr_adapter >= 0.0) || !(weight_decay >= 0.0)) {
    throw std::invalid_argument("learning rates and weight decay must be non-negative");
  }
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (batch_chains < 1) throw std::invalid_argument("batch_chains must be positive");
  if (!(noise_std >= 0.0) || !(box_jitter >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  if (!(cl_tau > 0.0)) throw std::invalid_argument("cl_tau must be positive");
}

LossReport BatchLoss::report() const {
  LossReport r;
  r.cls = cls.item();
  r.bbox = bbox.item();
  r.giou = giou.item();
  r.tride = tride.item();
  r.orthogonality = orthogonality.item();
  r.margin = margin.item();
  r.sentence_pos = sentence_pos.item();
  r.sentence_neg = sentence_neg.item();
  r.tase = tase.item();
  r.total = total.item();
  return r;
}

BatchLoss batch_loss(const GroundingModel& model, Binder& b, std::span<const TrainSample> batch,
                     const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Graph& g = b.graph();
  auto zero = [&] { return g.constant(Tensor::scalar(0.0)); };
  BatchLoss out;
  Var cls = zero(), bbox = zero(), giou = zero(), spos = zero(), sneg = zero();
  std::size_t cls_count = 0, box_count = 0;
  std::vector<tride::ChainComponents> comps;
  Var root = g.constant(Tensor::vector(model.root()));
  const double tau = model.config().tau;

  for (const TrainSample& s : batch) {
    const auto& chain = *s.chain;
    const std::size_t n = s.proposals.size();
    Tensor feats(diff::Shape{n, model.vision().dim()});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < feats.cols(); ++j) feats.at(i, j) = s.proposals[i].feature[j];
    }
    Var fv = g.constant(std::move(feats));
    geometry::ChainVars cv;
    tride::ChainComponents cc;
    for (int t = 0; t < hivg::kTiers; ++t) {
      for (bool positive : {true, false}) {
        const std::string& caption = positive ? chain.tiers[t].positive : chain.tiers[t].negative;
        const auto e = model.embed(b, caption);
        const auto hits = hivg::matching_objects(caption, *s.scene);
        std::vector<double> labels(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& src = s.proposals[i].source_object_id;
          labels[i] = src && std::find(hits.begin(), hits.end(), *src) != hits.end() ? 1.0 : 0.0;
        }
        Var f = focal_loss_logits(score_logits(e.query, fv, tau), labels, config.focal_gamma, config.focal_alpha);
        cls = diff::add(cls, diff::scale(f, static_cast<double>(n)));
        cls_count += n;
        (positive ? cv.pos : cv.neg).push_back(e.tride.embedding);
        (positive ? cc.pos : cc.neg).push_back(e.tride.components);
      }
    }
    comps.push_back(std::move(cc));

    for (const auto& p : s.proposals) {
      if (!p.source_object_id) continue;
      const hivg::Box& gt = s.scene->object(*p.source_object_id).box;
      const BoxVars rb = model.refine_box(b, p);
      bbox = diff::add(bbox, l1_box_loss(rb, gt));
      giou = diff::add(giou, giou_loss(rb, gt));
      ++box_count;
    }

    if (config.mode == LossMode::kCL) {
      Var cl = zero();
      for (int t = 0; t + 1 < hivg::kTiers; ++t) {
        const Var pos[] = {cv.pos[t + 1]};
        const Var neg[] = {cv.neg[t], cv.neg[t + 1]};
        cl = diff::add(cl, contrastive_baseline(cv.pos[t], pos, neg, config.cl_tau));
      }
      spos = diff::add(spos, diff::scale(cl, 1.0 / (hivg::kTiers - 1)));
    } else {
      static const std::map<LossMode, geometry::SentenceObjective> objective{
          {LossMode::kBase, geometry::SentenceObjective::kNone},
          {LossMode::kRE, geometry::SentenceObjective::kRE},
          {LossMode::kH, geometry::SentenceObjective::kH},
          {LossMode::kHPosOnly, geometry::SentenceObjective::kHPosOnly},
          {LossMode::kHNegOnly, geometry::SentenceObjective::kHNegOnly},
          {LossMode::kReverseH, geometry::SentenceObjective::kReverseH}};
      const auto terms =
          geometry::sentence_objective(objective.at(config.mode), cv, root, config.reference, config.hier);
      spos = diff::add(spos, terms.pos);
      sneg = diff::add(sneg, terms.neg);
    }
  }

  const double nb = static_cast<double>(batch.size());
  out.cls = diff::scale(cls, 1.0 / static_cast<double>(cls_count));
  out.bbox = box_count ? diff::scale(bbox, 1.0 / static_cast<double>(box_count)) : zero();
  out.giou = box_count ? diff::scale(giou, 1.0 / static_cast<double>(box_count)) : zero();
  out.sentence_pos = diff::scale(spos, 1.0 / nb);
  out.sentence_neg = diff::scale(sneg, 1.0 / nb);
  if (model.config().tride.active_components() > 0) {
    tride::TriDeLossOptions o = config.tride_loss;
    o.lambda = config.weights.lambda;
    const auto parts = tride::tride_loss(g, comps, o);
    out.tride = parts.total;
    out.orthogonality = parts.orthogonality;
    out.margin = parts.margin;
  } else {
    out.tride = out.orthogonality = out.margin = zero();
  }
  out.tase = diff::add(out.tride, diff::add(out.sentence_pos, out.sentence_neg));
  const LossWeights& w = config.weights;
  out.total = diff::add(diff::add(diff::scale(out.cls, w.cls), diff::scale(out.bbox, w.bbox)),
                        diff::add(diff::scale(out.giou, w.giou), diff::scale(out.tase, w.tase)));
  return out;
}

NonFiniteLossError::NonFiniteLossError(int step, const std::string& what)
    : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + what), step_(step) {}

Trainer::Trainer(GroundingModel& model, const hivg::Corpus& corpus, TrainConfig config)
    : model_(&model), corpus_(&corpus), config_(std::move(config)) {
  config_.validate();
  std::map<std::uint64_t, const hivg::Scene*> by_id;
  for (const auto& s : corpus.scenes) by_id[s.id] = &s;
  for (const auto& c : corpus.chains) {
    auto it = by_id.find(c.scene_id);
    if (it == by_id.end()) throw std::invalid_argument("Trainer: chain refers to a missing scene");
    pairs_.emplace_back(it->second, &c);
  }
  if (pairs_.empty()) throw std::invalid_argument("Trainer: empty corpus");
}

std::vector<TrainSample> Trainer::batch_at(int iteration) const {
  const auto it = static_cast<std::uint64_t>(iteration);
  std::mt19937_64 rng(hivg::derive_seed(config_.seed, it, 7));
  std::vector<std::size_t> idx(pairs_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t k = std::min(idx.size(), static_cast<std::size_t>(config_.batch_chains));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng)]);
  }
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& [scene, chain] = pairs_[idx[i]];
    out.push_back({scene, chain,
                   proposal_features(*scene, model_->vision(), config_.noise_std,
                                     hivg::derive_seed(config_.seed, it, 8 + i), config_.box_jitter)});
  }
  return out;
}

LossReport Trainer::step() {
  ParamStore& store = model_->store();
  const auto batch = batch_at(iteration_);
  Graph g;
  Binder b(g, store);
  BatchLoss loss;
  try {
    loss = batch_loss(*model_, b, batch, config_);
  } catch (const diff::DomainError& e) {
    store.zero_grad();
    throw NonFiniteLossError(iteration_, e.what());
  }
  const LossReport report = loss.report();
  if (!std::isfinite(report.total)) {
    store.zero_grad();
    throw NonFiniteLossError(iteration_, "total loss is " + std::to_string(report.total));
  }
  g.backward(loss.total);
  optimizer_.next_step();
  for (const auto& name : store.names()) {
    const auto group = store.group(name);
    if (group == tride::ParamGroup::kFrozen) continue;
    Tensor& p = store.at(name);
    if (!p.has_grad()) continue;
    diff::AdamWOptions o;
    o.lr = group == tride::ParamGroup::kAdapter ? config_.lr_adapter : config_.lr_module;
    o.weight_decay = config_.weight_decay;
    optimizer_.update(name, p, o);
    if (!p.all_finite()) {
      store.zero_grad();
      throw NonFiniteLossError(iteration_, "parameter " + name + " became non-finite");
    }
  }
  store.zero_grad();
  ++iteration_;
  return report;
}

void Trainer::run(const std::function<void(int, const LossReport&)>& on_step) {
  while (iteration_ < config_.iterations) {
    const int it = iteration_;
    const LossReport r = step();
    if (on_step) on_step(it, r);
  }
}

nlohmann::json Trainer::optimizer_state() const {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, mo] : optimizer_.moments()) m[name] = {{"m", mo.m}, {"v", mo.v}};
  return {{"step", optimizer_.step()}, {"moments", m}};
}

void Trainer::load_state(int iteration, const nlohmann::json& j) {
  if (iteration < 0) throw std::invalid_argument("load_state: negative iteration");
  diff::AdamW opt;
  opt.set_step(j.at("step").get<std::int64_t>());
  for (const auto& [name, mo] : j.at("moments").items()) {
    if (!model_->store().contains(name)) throw std::invalid_argument("optimizer state for unknown parameter " + name);
    const std::size_t n = model_->store().at(name).size();
    diff::AdamW::Moments x{mo.at("m").get<std::vector<double>>(), mo.at("v").get<std::vector<double>>()};
    if (x.m.size() != n || x.v.size() != n) throw std::invalid_argument("optimizer state size mismatch for " + name);
    opt.moments()[name] = std::move(x);
  }
  optimizer_ = std::move(opt);
  iteration_ = iteration;
}

}  // namespace tase::grounder
