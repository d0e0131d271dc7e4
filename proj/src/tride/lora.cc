#include "tase/tride/lora.h"

#include <cmath>
#include <stdexcept>

#include "tase/diff/ops.h"

namespace tase::tride {

LoraAdapter make_lora(std::size_t d_in, std::size_t d_out, std::size_t rank, double alpha, std::string target,
                      std::mt19937_64& rng) {
  if (rank == 0) throw std::invalid_argument("make_lora: rank must be positive");
  LoraAdapter a;
  a.down = Tensor(diff::Shape{d_in, rank});
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
  for (double& v : a.down.values()) v = n(rng);
  a.up = Tensor(diff::Shape{rank, d_out}, 0.0);
  a.scale = alpha / static_cast<double>(rank);
  a.target = std::move(target);
  return a;
}

Tensor lora_effective_weight(const LoraAdapter& a, const Tensor& w) {
  if (w.rank() != 2 || a.down.rows() != w.rows() || a.up.cols() != w.cols() || a.down.cols() != a.up.rows()) {
    throw diff::ShapeError("lora: adapter " + diff::shape_string(a.down.shape()) + "/" +
                           diff::shape_string(a.up.shape()) + " does not fit weight " + diff::shape_string(w.shape()));
  }
  Tensor out = w;
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += a.down.at(i, k) * a.up.at(k, j);
      out.at(i, j) += a.scale * s;
    }
  }
  return out;
}

Tensor lora_apply(const LoraAdapter& a, const Tensor& w, const Tensor& x) {
  diff::Graph g;
  return lora_apply(g.constant(x), g.constant(w), g.constant(a.down), g.constant(a.up), a.scale).value();
}

Var lora_apply(Var x, Var w, Var down, Var up, double scale) {
  const auto& ws = w.shape();
  if (ws.size() != 2 || down.shape().size() != 2 || up.shape().size() != 2 || down.shape()[0] != ws[0] ||
      up.shape()[1] != ws[1] || down.shape()[1] != up.shape()[0]) {
    throw diff::ShapeError("lora: adapter " + diff::shape_string(down.shape()) + "/" + diff::shape_string(up.shape()) +
                           " does not fit weight " + diff::shape_string(ws));
  }
  Var base = diff::matmul(x, w);
  Var low = diff::matmul(diff::matmul(x, down), up);
  return diff::add(base, diff::scale(low, scale));
}

}  // namespace tase::tride
