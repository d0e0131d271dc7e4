#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "tase/diff/graph.h"
#include "tase/diff/tensor.h"

// Low-rank adapters, written for row vectors: a wrapped projection x W
// becomes x (W + scale * down up), i.e. x goes through `down` (d_in x rank)
// and then `up` (rank x d_out).
namespace tase::tride {

using diff::Tensor;
using diff::Var;

struct LoraAdapter {
  Tensor down;
  Tensor up;
  double scale = 1.0;
  std::string target;

  std::size_t rank() const { return down.cols(); }
};

// `down` is Gaussian with std 1/sqrt(d_in); `up` starts at zero so the wrapped
// projection is unchanged. scale = alpha / rank.
LoraAdapter make_lora(std::size_t d_in, std::size_t d_out, std::size_t rank, double alpha, std::string target,
                      std::mt19937_64& rng);

// Dense W + scale * down up.
Tensor lora_effective_weight(const LoraAdapter& adapter, const Tensor& w);
// x (W + scale * down up) for a vector or a matrix of rows.
Tensor lora_apply(const LoraAdapter& adapter, const Tensor& w, const Tensor& x);
Var lora_apply(Var x, Var w, Var down, Var up, double scale);

}  // namespace tase::tride
