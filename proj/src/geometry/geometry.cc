#include "tase/geometry/geometry.h"

#include <cmath>

#include "tase/diff/ops.h"

namespace tase::geometry {

using diff::Graph;
using diff::Tensor;

void HierarchyChain::validate() const {
  if (pos.empty()) throw std::invalid_argument("HierarchyChain: no tiers");
  if (pos.size() != neg.size()) {
    throw std::invalid_argument("HierarchyChain: " + std::to_string(pos.size()) + " positives but " +
                                std::to_string(neg.size()) + " negatives");
  }
  const std::size_t d = pos[0].size();
  for (std::size_t t = 0; t < pos.size(); ++t) {
    if (pos[t].size() != d || neg[t].size() != d) {
      throw std::invalid_argument("HierarchyChain: tier " + std::to_string(t) + " has mismatched dimension");
    }
  }
}

ChainVars bind_chain(Graph& g, const HierarchyChain& chain) {
  chain.validate();
  ChainVars v;
  for (std::size_t t = 0; t < chain.tiers(); ++t) {
    v.pos.push_back(g.constant(Tensor::vector(chain.pos[t])));
    v.neg.push_back(g.constant(Tensor::vector(chain.neg[t])));
  }
  return v;
}

namespace {

double norm_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

Var angle_between(Var a_off, Var b_off, const char* what) {
  if (norm_of(a_off.value()) < kDegenerateNorm || norm_of(b_off.value()) < kDegenerateNorm) {
    throw DegenerateError(std::string(what) + ": difference vector norm below " + std::to_string(kDegenerateNorm));
  }
  return diff::arccos(diff::cosine_similarity(a_off, b_off));
}

// Embedding positions after optional normalization, plus the reference
// position of each tier in the same space.
struct Placed {
  std::vector<Var> pos, neg, ref;
};

Placed place(const ChainVars& chain, Var root, ReferenceMode mode, const HierOptions& options) {
  Placed p;
  const std::size_t l = chain.tiers();
  for (std::size_t t = 0; t < l; ++t) {
    const bool global = t == 0 || mode == ReferenceMode::kGlobal;
    Var raw_ref = global ? root : chain.pos[t - 1];
    if (!options.normalize) {
      p.ref.push_back(raw_ref);
      p.pos.push_back(chain.pos[t]);
      p.neg.push_back(chain.neg[t]);
      continue;
    }
    Var placed_ref = global ? root : p.pos[t - 1];
    p.ref.push_back(placed_ref);
    p.pos.push_back(diff::add(placed_ref, normalize_relative(chain.pos[t], raw_ref, options.epsilon)));
    p.neg.push_back(diff::add(placed_ref, normalize_relative(chain.neg[t], raw_ref, options.epsilon)));
  }
  return p;
}

Var zero(Graph& g) { return g.constant(Tensor::scalar(0.0)); }

void check_chain(const ChainVars& chain) {
  if (chain.pos.empty() || chain.pos.size() != chain.neg.size()) {
    throw std::invalid_argument("hierarchy chain needs one positive and one negative per tier");
  }
}

}  // namespace

Var exterior_angle(Var a, Var b, Var r) {
  Var a_off = diff::sub(a, r);
  Var b_off = diff::sub(diff::sub(b, r), a_off);
  return angle_between(a_off, b_off, "exterior_angle");
}

Var flipped_exterior_angle(Var a, Var b, Var r) {
  Var a_off = diff::sub(a, r);
  Var b_off = diff::sub(diff::sub(r, b), a_off);
  return angle_between(a_off, b_off, "flipped_exterior_angle");
}

Var normalize_relative(Var e, Var r, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("normalize_relative: epsilon must be positive");
  Var d = diff::sub(e, r);
  return diff::div_scalar(d, diff::add_scalar(diff::l2_norm(d), epsilon));
}

Var resolve_reference(const ChainVars& chain, std::size_t t, Var root, ReferenceMode mode) {
  if (t >= chain.tiers()) {
    throw std::out_of_range("resolve_reference: tier " + std::to_string(t) + " out of range for " +
                            std::to_string(chain.tiers()) + " tiers");
  }
  if (t == 0 || mode == ReferenceMode::kGlobal) return root;
  return chain.pos[t - 1];
}

Var re_loss(const ChainVars& chain, Var root) {
  check_chain(chain);
  Graph& g = *root.graph();
  Var total = zero(g);
  for (std::size_t i = 0; i + 1 < chain.tiers(); ++i) {
    total = diff::add(total, exterior_angle(chain.pos[i], chain.pos[i + 1], root));
    total = diff::sub(total, exterior_angle(chain.pos[i], chain.neg[i], root));
  }
  return total;
}

Var hier_pos_loss(const ChainVars& chain, Var root, ReferenceMode mode, const HierOptions& options) {
  check_chain(chain);
  Graph& g = *root.graph();
  const Placed p = place(chain, root, mode, options);
  Var total = zero(g);
  // Terms reaching tier l do not exist and are dropped.
  for (std::size_t t = 0; t + 1 < chain.tiers(); ++t) {
    total = diff::add(total, exterior_angle(p.pos[t], p.pos[t + 1], p.ref[t]));
    total = diff::add(total, exterior_angle(p.pos[t], p.neg[t + 1], p.ref[t]));
  }
  return total;
}

Var hier_neg_loss(const ChainVars& chain, Var root, ReferenceMode mode, const HierOptions& options) {
  check_chain(chain);
  Graph& g = *root.graph();
  const Placed p = place(chain, root, mode, options);
  Var total = zero(g);
  for (std::size_t t = 0; t < chain.tiers(); ++t) {
    total = diff::add(total, flipped_exterior_angle(p.pos[t], p.neg[t], p.ref[t]));
  }
  return total;
}

Var tase_loss(Var tride, Var hier_pos, Var hier_neg) { return diff::add(diff::add(tride, hier_pos), hier_neg); }

SentenceTerms sentence_objective(SentenceObjective objective, const ChainVars& chain, Var root, ReferenceMode mode,
                                 const HierOptions& options) {
  Graph& g = *root.graph();
  switch (objective) {
    case SentenceObjective::kNone:
      return {zero(g), zero(g)};
    case SentenceObjective::kRE:
      return {re_loss(chain, root), zero(g)};
    case SentenceObjective::kH:
      return {hier_pos_loss(chain, root, mode, options), hier_neg_loss(chain, root, mode, options)};
    case SentenceObjective::kHPosOnly:
      return {hier_pos_loss(chain, root, mode, options), zero(g)};
    case SentenceObjective::kHNegOnly:
      return {zero(g), hier_neg_loss(chain, root, mode, options)};
    case SentenceObjective::kReverseH: {
      // Negatives take the place of positives and vice versa.
      ChainVars swapped{chain.neg, chain.pos};
      return {hier_pos_loss(swapped, root, mode, options), hier_neg_loss(swapped, root, mode, options)};
    }
  }
  throw std::logic_error("sentence_objective: unknown objective");
}

// --- value wrappers ---

double exterior_angle(std::span<const double> a, std::span<const double> b, std::span<const double> r) {
  Graph g;
  auto c = [&](std::span<const double> v) { return g.constant(Tensor::vector(Vec(v.begin(), v.end()))); };
  return exterior_angle(c(a), c(b), c(r)).item();
}

Vec normalize_relative(std::span<const double> e, std::span<const double> r, double epsilon) {
  Graph g;
  auto c = [&](std::span<const double> v) { return g.constant(Tensor::vector(Vec(v.begin(), v.end()))); };
  const Tensor& out = normalize_relative(c(e), c(r), epsilon).value();
  return Vec(out.values().begin(), out.values().end());
}

Vec resolve_reference(const HierarchyChain& chain, std::size_t t, const ReferenceFrame& frame) {
  Graph g;
  ChainVars v = bind_chain(g, chain);
  const Tensor& out = resolve_reference(v, t, g.constant(Tensor::vector(frame.root)), frame.mode).value();
  return Vec(out.values().begin(), out.values().end());
}

double re_loss(const HierarchyChain& chain, std::span<const double> root) {
  Graph g;
  ChainVars v = bind_chain(g, chain);
  return re_loss(v, g.constant(Tensor::vector(Vec(root.begin(), root.end())))).item();
}

double hier_pos_loss(const HierarchyChain& chain, const ReferenceFrame& frame, const HierOptions& options) {
  Graph g;
  ChainVars v = bind_chain(g, chain);
  return hier_pos_loss(v, g.constant(Tensor::vector(frame.root)), frame.mode, options).item();
}

double hier_neg_loss(const HierarchyChain& chain, const ReferenceFrame& frame, const HierOptions& options) {
  Graph g;
  ChainVars v = bind_chain(g, chain);
  return hier_neg_loss(v, g.constant(Tensor::vector(frame.root)), frame.mode, options).item();
}

double tase_loss(double tride, double hier_pos, double hier_neg) { return tride + hier_pos + hier_neg; }

ChainAngles chain_angles(const HierarchyChain& chain, const ReferenceFrame& frame) {
  chain.validate();
  ChainAngles out;
  for (std::size_t t = 0; t < chain.tiers(); ++t) {
    const Vec ref = resolve_reference(chain, t, frame);
    if (t + 1 < chain.tiers()) out.positive.push_back(exterior_angle(chain.pos[t], chain.pos[t + 1], ref));
    out.negative.push_back(exterior_angle(chain.pos[t], chain.neg[t], ref));
  }
  return out;
}

}  // namespace tase::geometry
