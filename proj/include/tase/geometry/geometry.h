#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tase/diff/graph.h"

// Exterior-angle geometry and the sentence-level hierarchy objectives.
//
// The exterior angle at `a` measures how far the step a -> b turns away from
// the ray r -> a:
//
//   angle(a, b; r) = arccos( a'.b' / (|a'| |b'|) ),  a' = a - r,  b' = (b - r) - a'
//
// Tiers are indexed from 0. The reference for tier t is the frozen root at
// t = 0 and the tier t-1 positive otherwise (dynamic reference); in global
// mode every tier uses the root.
namespace tase::geometry {

using Vec = std::vector<double>;
using diff::Var;

class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kDegenerateNorm = 1e-12;

enum class ReferenceMode { kDynamic, kGlobal };

struct ReferenceFrame {
  Vec root;  // never updated by training
  ReferenceMode mode = ReferenceMode::kDynamic;
};

struct HierOptions {
  double epsilon = 1e-8;
  // Normalize each embedding against its tier reference before forming angles.
  bool normalize = true;
};

// One positive and one negative embedding per tier, all of dimension D.
struct HierarchyChain {
  std::vector<Vec> pos;
  std::vector<Vec> neg;

  std::size_t tiers() const { return pos.size(); }
  std::size_t dim() const { return pos.empty() ? 0 : pos[0].size(); }
  void validate() const;
};

// Graph-side chain; pos[t] and neg[t] are rank-1 variables.
struct ChainVars {
  std::vector<Var> pos;
  std::vector<Var> neg;

  std::size_t tiers() const { return pos.size(); }
};

ChainVars bind_chain(diff::Graph& g, const HierarchyChain& chain);

// --- graph ops ---
Var exterior_angle(Var a, Var b, Var r);
// Exterior angle with the negative reflected through the reference:
// b' = (r - b) - a'.
Var flipped_exterior_angle(Var a, Var b, Var r);
Var normalize_relative(Var e, Var r, double epsilon);
Var resolve_reference(const ChainVars& chain, std::size_t t, Var root, ReferenceMode mode);
Var re_loss(const ChainVars& chain, Var root);
Var hier_pos_loss(const ChainVars& chain, Var root, ReferenceMode mode, const HierOptions& options = {});
Var hier_neg_loss(const ChainVars& chain, Var root, ReferenceMode mode, const HierOptions& options = {});
Var tase_loss(Var tride, Var hier_pos, Var hier_neg);

// --- value wrappers ---
double exterior_angle(std::span<const double> a, std::span<const double> b, std::span<const double> r);
Vec normalize_relative(std::span<const double> e, std::span<const double> r, double epsilon);
Vec resolve_reference(const HierarchyChain& chain, std::size_t t, const ReferenceFrame& frame);
double re_loss(const HierarchyChain& chain, std::span<const double> root);
double hier_pos_loss(const HierarchyChain& chain, const ReferenceFrame& frame, const HierOptions& options = {});
double hier_neg_loss(const HierarchyChain& chain, const ReferenceFrame& frame, const HierOptions& options = {});
double tase_loss(double tride, double hier_pos, double hier_neg);

// Sentence-level objective selected by the training loss mode. Contrastive
// learning lives with the grounder since it does not use the geometry.
enum class SentenceObjective { kNone, kRE, kH, kHPosOnly, kHNegOnly, kReverseH };

// Returns {hier_pos, hier_neg}; unused parts are constant zero scalars.
struct SentenceTerms {
  Var pos;
  Var neg;
};
SentenceTerms sentence_objective(SentenceObjective objective, const ChainVars& chain, Var root,
                                 ReferenceMode mode, const HierOptions& options = {});

// Angle statistics used by evaluation histograms: cross-tier positive pairs
// and same-tier positive/negative pairs, both under the plain exterior angle
// with the chain's reference.
struct ChainAngles {
  std::vector<double> positive;
  std::vector<double> negative;
};
ChainAngles chain_angles(const HierarchyChain& chain, const ReferenceFrame& frame);

}  // namespace tase::geometry
