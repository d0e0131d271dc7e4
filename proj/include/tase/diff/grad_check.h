#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tase/diff/graph.h"

namespace tase::diff {

// Builds the function under test from graph leaves. Non-scalar outputs are
// reduced to a scalar with fixed pseudo-random weights before differencing.
using GraphFn = std::function<Var(Graph&, std::span<const Var>)>;

// True when coordinate `coord` of input `input` sits within reach of a
// non-differentiable point for the given step; such coordinates are skipped.
using NearBoundaryFn =
    std::function<bool(std::span<const Tensor> inputs, std::size_t input, std::size_t coord, double step)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-4;
  // 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t coord_seed = 0;
  std::string fault;  // op name whose backward is negated (self test)
  NearBoundaryFn near_boundary;
};

struct InputCheck {
  std::size_t input = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

struct GradCheckReport {
  std::string op;
  std::vector<InputCheck> inputs;
  double max_rel_error = 0.0;
  std::size_t excluded = 0;
  bool passed = false;
};

GradCheckReport grad_check_fn(std::string op, const GraphFn& fn, const std::vector<Tensor>& inputs,
                              const GradCheckOptions& options = {});

// Named primitive with a sampler for well-conditioned random inputs.
struct PrimitiveCase {
  std::string name;
  GraphFn fn;
  std::function<std::vector<Tensor>(std::mt19937_64&)> sample;
  NearBoundaryFn near_boundary;
};

const std::vector<PrimitiveCase>& primitive_cases();
const PrimitiveCase& primitive_case(std::string_view op_kind);

GradCheckReport grad_check(std::string_view op_kind, const std::vector<Tensor>& inputs, double step = 1e-5,
                           double tol = 1e-4);

// Draws a tensor with entries uniform in [lo, hi].
Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0);

// Merges several reports into a single per-op summary (max over reports).
GradCheckReport merge_reports(std::string op, std::span<const GradCheckReport> reports);

}  // namespace tase::diff
