#include "tase/diff/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tase/diff/ops.h"

namespace tase::diff {
namespace {

Var reduce_to_scalar(Graph& g, Var out) {
  if (out.size() == 1) return out.value().rank() == 0 ? out : element(out, 0);
  Tensor w(out.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + std::sin(1.7 * static_cast<double>(i) + 0.3);
  return sum(mul(out, g.constant(std::move(w))));
}

double evaluate(const GraphFn& fn, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return reduce_to_scalar(g, fn(g, vars)).item();
}

}  // namespace

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

GradCheckReport grad_check_fn(std::string op, const GraphFn& fn, const std::vector<Tensor>& inputs,
                              const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  GradCheckReport report;
  report.op = std::move(op);

  Graph g;
  if (!options.fault.empty()) g.set_fault(options.fault);
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  Var loss = reduce_to_scalar(g, fn(g, leaves));
  g.backward(loss);

  std::mt19937_64 rng(options.coord_seed);
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    InputCheck ic;
    ic.input = k;
    const std::vector<double> analytic = g.gradient(leaves[k]);
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      if (options.near_boundary && options.near_boundary(inputs, k, c, options.step)) {
        ++ic.excluded;
        continue;
      }
      const double x0 = inputs[k][c];
      probe[k][c] = x0 + options.step;
      const double fp = evaluate(fn, probe);
      probe[k][c] = x0 - options.step;
      const double fm = evaluate(fn, probe);
      probe[k][c] = x0;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double denom = std::max({std::fabs(analytic[c]), std::fabs(numeric), options.floor});
      ic.max_rel_error = std::max(ic.max_rel_error, std::fabs(analytic[c] - numeric) / denom);
      ++ic.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, ic.max_rel_error);
    report.excluded += ic.excluded;
    report.inputs.push_back(ic);
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

GradCheckReport merge_reports(std::string op, std::span<const GradCheckReport> reports) {
  GradCheckReport merged;
  merged.op = std::move(op);
  merged.passed = true;
  for (const auto& r : reports) {
    merged.max_rel_error = std::max(merged.max_rel_error, r.max_rel_error);
    merged.excluded += r.excluded;
    merged.passed = merged.passed && r.passed;
    for (const auto& ic : r.inputs) {
      if (merged.inputs.size() <= ic.input) merged.inputs.resize(ic.input + 1);
      auto& m = merged.inputs[ic.input];
      m.input = ic.input;
      m.max_rel_error = std::max(m.max_rel_error, ic.max_rel_error);
      m.checked += ic.checked;
      m.excluded += ic.excluded;
    }
  }
  return merged;
}

namespace {

NearBoundaryFn near_zero(double margin_steps = 10.0) {
  return [margin_steps](std::span<const Tensor> in, std::size_t k, std::size_t c, double h) {
    return std::fabs(in[k][c]) < margin_steps * h;
  };
}

NearBoundaryFn near_tie() {
  return [](std::span<const Tensor> in, std::size_t, std::size_t c, double h) {
    return std::fabs(in[0][c] - in[1][c]) < 10.0 * h;
  };
}

std::vector<Tensor> sample_shapes(std::mt19937_64& rng, std::initializer_list<Shape> shapes, double lo = -1.0,
                                  double hi = 1.0) {
  std::vector<Tensor> out;
  for (const auto& s : shapes) out.push_back(random_tensor(rng, s, lo, hi));
  return out;
}

std::vector<PrimitiveCase> build_cases() {
  using S = Shape;
  std::vector<PrimitiveCase> cases;
  auto add_case = [&](std::string name, GraphFn fn, std::function<std::vector<Tensor>(std::mt19937_64&)> sample,
                      NearBoundaryFn nb = {}) {
    cases.push_back({std::move(name), std::move(fn), std::move(sample), std::move(nb)});
  };

  add_case("add", [](Graph&, std::span<const Var> v) { return add(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}, S{4}}); });
  add_case("sub", [](Graph&, std::span<const Var> v) { return sub(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}, S{3, 4}}); });
  add_case("mul", [](Graph&, std::span<const Var> v) { return mul(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}, S{4}}); });
  add_case("matmul", [](Graph&, std::span<const Var> v) { return matmul(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}, S{4, 2}}); });
  add_case("transpose", [](Graph&, std::span<const Var> v) { return transpose(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{3, 5}}); });
  add_case("affine", [](Graph&, std::span<const Var> v) { return affine(v[0], v[1], v[2]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}, S{4, 5}, S{5}}); });
  add_case("softmax", [](Graph&, std::span<const Var> v) { return softmax(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{3, 5}}, -2.0, 2.0); });
  add_case("logsumexp", [](Graph&, std::span<const Var> v) { return logsumexp(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{6}}, -2.0, 2.0); });
  add_case("layer_norm", [](Graph&, std::span<const Var> v) { return layer_norm(v[0], v[1], v[2]); },
           [](auto& r) {
             auto t = sample_shapes(r, {S{8}, S{8}, S{8}});
             return t;
           });
  add_case("gelu", [](Graph&, std::span<const Var> v) { return gelu(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{10}}, -3.0, 3.0); });
  add_case("relu", [](Graph&, std::span<const Var> v) { return relu(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{10}}); }, near_zero());
  add_case("exp", [](Graph&, std::span<const Var> v) { return exp(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{6}}); });
  add_case("log", [](Graph&, std::span<const Var> v) { return log(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{6}}, 0.2, 3.0); });
  add_case("sigmoid", [](Graph&, std::span<const Var> v) { return sigmoid(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{6}}, -4.0, 4.0); });
  add_case("abs", [](Graph&, std::span<const Var> v) { return abs(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{8}}); }, near_zero());
  add_case("pow_scalar", [](Graph&, std::span<const Var> v) { return pow_scalar(v[0], 2.0); },
           [](auto& r) { return sample_shapes(r, {S{6}}, 0.05, 1.0); });
  add_case("clamp", [](Graph&, std::span<const Var> v) { return clamp(v[0], -0.5, 0.5); },
           [](auto& r) { return sample_shapes(r, {S{8}}); },
           [](std::span<const Tensor> in, std::size_t k, std::size_t c, double h) {
             return std::fabs(std::fabs(in[k][c]) - 0.5) < 10.0 * h;
           });
  add_case("maximum", [](Graph&, std::span<const Var> v) { return maximum(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{6}, S{6}}); }, near_tie());
  add_case("minimum", [](Graph&, std::span<const Var> v) { return minimum(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{6}, S{6}}); }, near_tie());
  add_case("arccos", [](Graph&, std::span<const Var> v) { return arccos(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{6}}, -0.95, 0.95); },
           [](std::span<const Tensor> in, std::size_t k, std::size_t c, double h) {
             return std::fabs(in[k][c]) >= 1.0 - kArccosClampWidth - 10.0 * h;
           });
  add_case("l2_norm", [](Graph&, std::span<const Var> v) { return l2_norm(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{3, 4}}); });
  add_case("dot", [](Graph&, std::span<const Var> v) { return dot(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{5}, S{5}}); });
  add_case("cosine_similarity", [](Graph&, std::span<const Var> v) { return cosine_similarity(v[0], v[1]); },
           [](auto& r) { return sample_shapes(r, {S{5}, S{5}}); });
  add_case("arccos_cosine", [](Graph&, std::span<const Var> v) { return arccos(cosine_similarity(v[0], v[1])); },
           [](auto& r) { return sample_shapes(r, {S{3}, S{3}}); });
  add_case("sum", [](Graph&, std::span<const Var> v) { return sum(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{2, 3}}); });
  add_case("mean", [](Graph&, std::span<const Var> v) { return mean(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{2, 3}}); });
  add_case("mean_rows", [](Graph&, std::span<const Var> v) { return mean_rows(v[0]); },
           [](auto& r) { return sample_shapes(r, {S{4, 3}}); });
  add_case("div_scalar",
           [](Graph&, std::span<const Var> v) { return div_scalar(v[0], add_scalar(l2_norm(v[1]), 0.5)); },
           [](auto& r) { return sample_shapes(r, {S{4}, S{3}}); });
  add_case("slice_concat",
           [](Graph&, std::span<const Var> v) {
             Var parts[] = {slice_cols(v[0], 2, 2), slice_cols(v[0], 0, 2)};
             Var rows[] = {row(v[0], 1), row(v[0], 0)};
             Var flat[] = {sum(concat_cols(parts)), sum(mul(stack_rows(rows), v[0]))};
             return concat(flat);
           },
           [](auto& r) { return sample_shapes(r, {S{2, 4}}); });
  return cases;
}

}  // namespace

const std::vector<PrimitiveCase>& primitive_cases() {
  static const std::vector<PrimitiveCase> cases = build_cases();
  return cases;
}

const PrimitiveCase& primitive_case(std::string_view op_kind) {
  for (const auto& c : primitive_cases())
    if (c.name == op_kind) return c;
  throw std::invalid_argument("grad_check: unknown primitive '" + std::string(op_kind) + "'");
}

GradCheckReport grad_check(std::string_view op_kind, const std::vector<Tensor>& inputs, double step, double tol) {
  const PrimitiveCase& pc = primitive_case(op_kind);
  GradCheckOptions opt;
  opt.step = step;
  opt.tol = tol;
  opt.near_boundary = pc.near_boundary;
  return grad_check_fn(pc.name, pc.fn, inputs, opt);
}

}  // namespace tase::diff
