#include "tase/grounder/eval.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tase/geometry/geometry.h"


namespace tase::grounder {

double average_precision_11(std::vector<std::pair<double, bool>> preds, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += preds[i].second;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  double ap = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
    }
    ap += best;
  }
  return ap / 11.0;
}

namespace {

struct Query {
  std::size_t sample;
  int tier;
  std::vector<int> truth;  // object ids satisfying the caption
  DetectionOutput det;
};

// Greedy matching in descending score order; returns (score, tp) per prediction.
std::vector<std::pair<double, bool>> match(const std::vector<const Query*>& qs,
                                           const std::vector<const hivg::Scene*>& scenes, double iou_threshold) {
  struct Pred {
    double score;
    std::size_t q, p;
  };
  std::vector<Pred> preds;
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    for (std::size_t p = 0; p < qs[qi]->det.scores.size(); ++p) preds.push_back({qs[qi]->det.scores[p], qi, p});
  }
  std::stable_sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> claimed(qs.size());
  for (std::size_t qi = 0; qi < qs.size(); ++qi) claimed[qi].assign(qs[qi]->truth.size(), false);
  std::vector<std::pair<double, bool>> out;
  for (const Pred& pr : preds) {
    const Query& q = *qs[pr.q];
    const hivg::Scene& s = *scenes[q.sample];
    double best = iou_threshold;
    int pick = -1;
    for (std::size_t k = 0; k < q.truth.size(); ++k) {
      if (claimed[pr.q][k]) continue;
      const double v = hivg::iou(q.det.boxes[pr.p], s.object(q.truth[k]).box);
      if (v >= best) {
        best = v;
        pick = static_cast<int>(k);
      }
    }
    if (pick >= 0) claimed[pr.q][static_cast<std::size_t>(pick)] = true;
    out.emplace_back(pr.score, pick >= 0);
  }
  return out;
}

std::size_t truth_count(const std::vector<const Query*>& qs) {
  std::size_t n = 0;
  for (const Query* q : qs) n += q->truth.size();
  return n;
}

}  // namespace

Detector oracle_detector() {
  return [](const std::string& caption, const hivg::Scene& scene, const std::vector<Proposal>& proposals) {
    const auto truth = hivg::matching_objects(caption, scene);
    DetectionOutput d;
    for (const auto& p : proposals) {
      const bool hit = p.source_object_id && std::count(truth.begin(), truth.end(), *p.source_object_id) > 0;
      d.scores.push_back(hit ? 0.99 : 0.01);
      d.boxes.push_back(p.source_object_id ? scene.object(*p.source_object_id).box : p.box);
    }
    d.ranking.resize(proposals.size());
    std::iota(d.ranking.begin(), d.ranking.end(), 0);
    std::stable_sort(d.ranking.begin(), d.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return d.scores[a] > d.scores[b]; });
    return d;
  };
}

Detector model_detector(const GroundingModel& model) {
  return [&model](const std::string& caption, const hivg::Scene&, const std::vector<Proposal>& proposals) {
    return model.detect(caption, proposals);
  };
}

Metrics evaluate(const Detector& detector, const hivg::Corpus& eval, const VisionEncoder& vision,
                 const EvalOptions& o) {
  if (eval.chains.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  std::map<std::uint64_t, std::size_t> scene_index;
  for (std::size_t i = 0; i < eval.scenes.size(); ++i) scene_index[eval.scenes[i].id] = i;
  std::vector<std::vector<Proposal>> proposals(eval.scenes.size());
  for (std::size_t i = 0; i < eval.scenes.size(); ++i) {
    proposals[i] = proposal_features(eval.scenes[i], vision, o.noise_std, hivg::derive_seed(o.seed, i, 3), o.box_jitter);
  }
  std::vector<const hivg::Scene*> scenes;
  std::vector<Query> queries;
  for (const auto& c : eval.chains) {
    auto it = scene_index.find(c.scene_id);
    if (it == scene_index.end()) throw std::invalid_argument("evaluate: chain refers to a missing scene");
    const hivg::Scene& s = eval.scenes[it->second];
    for (int t = 0; t < hivg::kTiers; ++t) {
      for (const std::string* cap : {&c.tiers[t].positive, &c.tiers[t].negative}) {
        Query q{scenes.size(), t, hivg::matching_objects(*cap, s), detector(*cap, s, proposals[it->second])};
        queries.push_back(std::move(q));
      }
    }
    scenes.push_back(&s);
  }
  Metrics m;
  m.queries = queries.size();
  std::array<std::vector<const Query*>, hivg::kTiers> by_tier;
  for (const auto& q : queries) by_tier[q.tier].push_back(&q);
  m.ap_c = average_precision_11(match(by_tier[0], scenes, o.iou_threshold), truth_count(by_tier[0]));
  m.ap_d = average_precision_11(match(by_tier[2], scenes, o.iou_threshold), truth_count(by_tier[2]));
  m.ap = std::sqrt(m.ap_c * m.ap_d);
  for (int t = 0; t < hivg::kTiers; ++t) {
    std::vector<Query> kept;
    for (const Query* q : by_tier[t]) {
      Query k = *q;
      for (double& s : k.det.scores) {
        if (!(s > o.operating_point)) s = -1.0;
      }
      kept.push_back(std::move(k));
    }
    std::vector<const Query*> ptrs;
    for (const auto& k : kept) ptrs.push_back(&k);
    TierStats& st = m.tiers[t];
    for (const auto& [score, tp] : match(ptrs, scenes, o.iou_threshold)) {
      if (score < 0.0) continue;
      (tp ? st.tp : st.fp) += 1;
    }
    st.fn = static_cast<int>(truth_count(ptrs)) - st.tp;
    st.precision = st.tp + st.fp ? static_cast<double>(st.tp) / (st.tp + st.fp) : 0.0;
    st.recall = st.tp + st.fn ? static_cast<double>(st.tp) / (st.tp + st.fn) : 0.0;
  }
  return m;
}

AngleHistogram angle_histogram(const GroundingModel& model, const hivg::Corpus& eval, int bins) {
  if (bins < 1) throw std::invalid_argument("angle_histogram: bins must be positive");
  AngleHistogram h;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(std::numbers::pi * i / bins);
  h.positive.assign(static_cast<std::size_t>(bins), 0);
  h.negative.assign(static_cast<std::size_t>(bins), 0);
  std::vector<double> pos, neg;
  geometry::ReferenceFrame frame{model.root(), geometry::ReferenceMode::kDynamic};
  for (const auto& c : eval.chains) {
    geometry::HierarchyChain hc;
    for (const auto& t : c.tiers) {
      hc.pos.push_back(model.embed_value(t.positive));
      hc.neg.push_back(model.embed_value(t.negative));
    }
    const auto a = geometry::chain_angles(hc, frame);
    pos.insert(pos.end(), a.positive.begin(), a.positive.end());
    neg.insert(neg.end(), a.negative.begin(), a.negative.end());
  }
  auto bin = [&](double v) {
    return std::min(static_cast<std::size_t>(v / std::numbers::pi * bins), static_cast<std::size_t>(bins - 1));
  };
  for (double v : pos) ++h.positive[bin(v)];
  for (double v : neg) ++h.negative[bin(v)];
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  h.mean_positive = mean(pos);
  h.mean_negative = mean(neg);
  return h;
}

Metrics evaluate(const GroundingModel& model, const hivg::Corpus& eval, const EvalOptions& o) {
  Metrics m = evaluate(model_detector(model), eval, model.vision(), o);
  m.angles = angle_histogram(model, eval, o.angle_bins);
  return m;
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json tiers_j = nlohmann::json::array();
  for (int t = 0; t < 3; ++t) {
    const auto& s = tiers[t];
    tiers_j.push_back({{"tier", t + 1},
                       {"tp", s.tp},
                       {"fp", s.fp},
                       {"fn", s.fn},
                       {"precision", s.precision},
                       {"recall", s.recall}});
  }
  return {{"ap_c", ap_c},
          {"ap_d", ap_d},
          {"ap", ap},
          {"queries", queries},
          {"tiers", tiers_j},
          {"angle_mean_positive", angles.mean_positive},
          {"angle_mean_negative", angles.mean_negative}};
}

std::string Metrics::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "metric,name,value\n";
  out << "ap,AP_c," << ap_c << "\n";
  out << "ap,AP_d," << ap_d << "\n";
  out << "ap,AP," << ap << "\n";
  for (int t = 0; t < 3; ++t) {
    out << "precision,tier" << t + 1 << "," << tiers[t].precision << "\n";
    out << "recall,tier" << t + 1 << "," << tiers[t].recall << "\n";
  }
  out << "angle,mean_positive," << angles.mean_positive << "\n";
  out << "angle,mean_negative," << angles.mean_negative << "\n";
  return out.str();
}

std::string Metrics::angle_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "bin_low,bin_high,count_pos,count_neg\n";
  for (std::size_t i = 0; i < angles.positive.size(); ++i) {
    out << angles.edges[i] << "," << angles.edges[i + 1] << "," << angles.positive[i] << "," << angles.negative[i]
        << "\n";
  }
  return out.str();
}

nlohmann::json DisentangleStats::to_json() const {
  return {{"mean_abs_dot", mean_abs_dot}, {"identity_rate", identity_rate}, {"chains", chains}};
}

DisentangleStats disentanglement(const GroundingModel& model, const hivg::Corpus& corpus) {
  if (corpus.chains.empty()) throw std::invalid_argument("disentanglement: empty corpus");
  if (model.config().tride.active_components() < 1) {
    throw std::invalid_argument("disentanglement: model has no components");
  }
  auto pooled = [&](const std::string& caption) { return model.pooled_components(caption); };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  DisentangleStats st;
  double dots = 0.0;
  std::size_t pairs = 0, hits = 0;
  for (const auto& chain : corpus.chains) {
    std::vector<std::vector<std::vector<double>>> pos, neg;
    for (const auto& tier : chain.tiers) {
      pos.push_back(pooled(tier.positive));
      neg.push_back(pooled(tier.negative));
    }
    for (const auto* side : {&pos, &neg}) {
      for (const auto& comps : *side) {
        for (std::size_t i = 0; i < comps.size(); ++i) {
          for (std::size_t j = i + 1; j < comps.size(); ++j) {
            dots += std::fabs(dot(comps[i], comps[j]));
            ++pairs;
          }
        }
      }
    }
    if (dot(pos[0][0], pos[1][0]) > dot(pos[0][0], neg[0][0])) ++hits;
  }
  st.chains = corpus.chains.size();
  st.mean_abs_dot = pairs ? dots / static_cast<double>(pairs) : 0.0;
  st.identity_rate = static_cast<double>(hits) / static_cast<double>(st.chains);
  return st;
}

}  // namespace tase::grounder
