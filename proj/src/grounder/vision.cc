#include "tase/grounder/vision.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tase::grounder {

namespace {

std::vector<double> unit_gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  double s = 0.0;
  for (double& x : v) {
    x = n(rng);
    s += x * x;
  }
  s = std::sqrt(s);
  for (double& x : v) x /= s;
  return v;
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  if (s < 1e-12) throw std::domain_error("vision: zero description vector");
  for (double& x : v) x /= s;
}

void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

VisionEncoder::VisionEncoder(VisionConfig config, const hivg::VocabTables& tables) : config_(config) {
  if (config_.dim == 0) throw std::invalid_argument("VisionEncoder: dim must be positive");
  std::mt19937_64 rng(config_.seed);
  for (const auto& n : tables.nouns) concepts_[n.noun] = unit_gaussian(rng, config_.dim);
  for (const auto& a : tables.attributes) concepts_[a.word] = unit_gaussian(rng, config_.dim);
  std::map<std::string, std::vector<std::string>> phrases_of;
  for (const auto& [kind, list] : tables.relations) {
    for (const auto& r : list) {
      concepts_[r.phrase] = unit_gaussian(rng, config_.dim);
      std::istringstream in(r.phrase);
      for (std::string w; in >> w;) phrases_of[w].push_back(r.phrase);
    }
  }
  for (const auto& n : tables.nouns) word_prior_[n.noun] = concepts_.at(n.noun);
  for (const auto& a : tables.attributes) word_prior_[a.word] = concepts_.at(a.word);
  for (const auto& [w, ps] : phrases_of) {
    if (word_prior_.count(w) || ps.size() > 2) continue;
    std::vector<double> m(config_.dim, 0.0);
    for (const auto& p : ps) axpy(m, 1.0 / static_cast<double>(ps.size()), concepts_.at(p));
    word_prior_[w] = m;
  }
}

const std::vector<double>& VisionEncoder::concept_vector(const std::string& name) const {
  auto it = concepts_.find(name);
  if (it == concepts_.end()) throw std::out_of_range("vision: unknown concept '" + name + "'");
  return it->second;
}

std::vector<double> VisionEncoder::describe(const hivg::SceneObject& o) const {
  std::vector<double> v = concept_vector(o.noun);
  for (const auto& [cls, word] : o.attributes) axpy(v, config_.attribute_weight, concept_vector(word));
  for (const auto& r : o.relations) axpy(v, config_.relation_weight, concept_vector(r));
  normalize(v);
  return v;
}

tride::LexicalPrior VisionEncoder::lexical_prior() const {
  return [this](const std::string& token) -> std::optional<std::vector<double>> {
    auto it = word_prior_.find(token);
    if (it == word_prior_.end()) return std::nullopt;
    return it->second;
  };
}

std::vector<Proposal> proposal_features(const hivg::Scene& scene, const VisionEncoder& encoder, double noise_std,
                                        std::uint64_t seed, double box_jitter) {
  if (!(noise_std >= 0.0) || !(box_jitter >= 0.0)) {
    throw std::invalid_argument("proposal_features: noise_std and box_jitter must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Proposal> out;
  for (const auto& o : scene.objects) {
    Proposal p;
    p.source_object_id = o.id;
    p.feature = encoder.describe(o);
    if (noise_std > 0.0) {
      for (double& x : p.feature) x += noise_std * n(rng);
    }
    p.box = o.box;
    if (box_jitter > 0.0) {
      const double w = o.box.width(), h = o.box.height();
      hivg::Box b{o.box.x0 + box_jitter * w * n(rng), o.box.y0 + box_jitter * h * n(rng),
                  o.box.x1 + box_jitter * w * n(rng), o.box.y1 + box_jitter * h * n(rng)};
      b.x0 = std::clamp(b.x0, 0.0, scene.width);
      b.y0 = std::clamp(b.y0, 0.0, scene.height);
      b.x1 = std::clamp(b.x1, 0.0, scene.width);
      b.y1 = std::clamp(b.y1, 0.0, scene.height);
      if (b.width() > 0.1 * w && b.height() > 0.1 * h) p.box = b;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace tase::grounder
