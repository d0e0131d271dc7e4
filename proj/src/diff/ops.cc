#include "tase/diff/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace tase::diff {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::logic_error("diff: unbound variable");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::logic_error("diff: operands belong to different graphs");
  return graph_of(a);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const char* expected) {
  throw ShapeError(std::string(op) + ": got shape " + shape_string(a) + ", expected " + expected);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void check_broadcast(const char* op, Var a, Var b) {
  if (!is_suffix(b.shape(), a.shape())) shape_fail(op, a.shape(), b.shape());
}

// Accumulates a (possibly broadcast) gradient into an input.
void accumulate(Graph& g, int id, std::span<const double> grad) {
  if (!g.requires_grad(id)) return;
  auto dst = g.grad_of(id);
  if (dst.size() == grad.size()) {
    for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += grad[i];
  } else {
    for (std::size_t i = 0; i < grad.size(); ++i) dst[i % dst.size()] += grad[i];
  }
}

template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  return g.record(op, std::move(y), {ia}, [ia, df](Graph& g, int self, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    auto dx = g.grad_of(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += up[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  check_broadcast("add", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y = x;
  const std::size_t m = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += z[i % m];
  const int ia = a.id(), ib = b.id();
  return g.record("add", std::move(y), {ia, ib}, [ia, ib](Graph& g, int, std::span<const double> up) {
    accumulate(g, ia, up);
    accumulate(g, ib, up);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  check_broadcast("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y = x;
  const std::size_t m = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= z[i % m];
  const int ia = a.id(), ib = b.id();
  return g.record("sub", std::move(y), {ia, ib}, [ia, ib](Graph& g, int, std::span<const double> up) {
    accumulate(g, ia, up);
    if (g.requires_grad(ib)) {
      std::vector<double> n(up.begin(), up.end());
      for (double& v : n) v = -v;
      accumulate(g, ib, n);
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  check_broadcast("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y = x;
  const std::size_t m = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= z[i % m];
  const int ia = a.id(), ib = b.id();
  return g.record("mul", std::move(y), {ia, ib}, [ia, ib](Graph& g, int, std::span<const double> up) {
    const Tensor& x = g.value(ia);
    const Tensor& z = g.value(ib);
    const std::size_t m = z.size();
    if (g.requires_grad(ia)) {
      auto dx = g.grad_of(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += up[i] * z[i % m];
    }
    if (g.requires_grad(ib)) {
      auto dz = g.grad_of(ib);
      for (std::size_t i = 0; i < x.size(); ++i) dz[i % m] += up[i] * x[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var mul_scalar(Var a, Var s) {
  if (s.size() != 1) shape_fail("mul_scalar", s.shape(), "a scalar");
  return mul(a, s.value().rank() == 0 ? s : element(s, 0));
}

Var div_scalar(Var a, Var s) {
  Graph& g = graph_of(a, s);
  if (s.size() != 1) shape_fail("div_scalar", s.shape(), "a scalar");
  const double d = s.value()[0];
  if (d == 0.0) throw DomainError("div_scalar: division by zero");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= d;
  const int ia = a.id(), is = s.id();
  return g.record("div_scalar", std::move(y), {ia, is}, [ia, is](Graph& g, int self, std::span<const double> up) {
    const double d = g.value(is)[0];
    if (g.requires_grad(ia)) {
      auto dx = g.grad_of(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += up[i] / d;
    }
    if (g.requires_grad(is)) {
      const Tensor& y = g.value(self);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += up[i] * y[i];
      g.grad_of(is)[0] -= acc / d;
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.rank() == 0 || z.rank() == 0 || x.rank() > 2 || z.rank() > 2 || (x.rank() == 1 && z.rank() == 1)) {
    shape_fail("matmul", x.shape(), z.shape());
  }
  // Vectors act as a row on the left and a column on the right.
  const std::size_t r = x.rank() == 2 ? x.shape()[0] : 1;
  const std::size_t n = x.shape().back();
  const std::size_t zn = z.shape()[0];
  const std::size_t m = z.rank() == 2 ? z.shape()[1] : 1;
  if (n != zn) shape_fail("matmul", x.shape(), z.shape());
  Shape out;
  if (x.rank() == 2) out.push_back(r);
  if (z.rank() == 2) out.push_back(m);
  Tensor y(out);
  const double* xp = x.data();
  const double* zp = z.data();
  double* yp = y.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double xv = xp[i * n + k];
      if (xv == 0.0) continue;
      const double* zr = zp + k * m;
      double* yr = yp + i * m;
      for (std::size_t j = 0; j < m; ++j) yr[j] += xv * zr[j];
    }
  const int ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(y), {ia, ib}, [ia, ib, r, n, m](Graph& g, int, std::span<const double> up) {
    const double* xp = g.value(ia).data();
    const double* zp = g.value(ib).data();
    if (g.requires_grad(ia)) {
      auto dx = g.grad_of(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          double acc = 0.0;
          const double* zr = zp + k * m;
          const double* ur = up.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) acc += ur[j] * zr[j];
          dx[i * n + k] += acc;
        }
    }
    if (g.requires_grad(ib)) {
      auto dz = g.grad_of(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          const double xv = xp[i * n + k];
          if (xv == 0.0) continue;
          const double* ur = up.data() + i * m;
          double* dr = dz.data() + k * m;
          for (std::size_t j = 0; j < m; ++j) dr[j] += xv * ur[j];
        }
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2) shape_fail("transpose", x.shape(), "rank 2");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tensor y(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  const int ia = a.id();
  return g.record("transpose", std::move(y), {ia}, [ia, r, c](Graph& g, int, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    auto dx = g.grad_of(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += up[j * r + i];
  });
}

Var affine(Var x, Var w, Var b) {
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || b.value().rank() != 1 || b.value().size() != wv.shape()[1]) {
    shape_fail("affine", wv.shape(), b.shape());
  }
  return add(matmul(x, w), b);
}

Var softmax(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 0) shape_fail("softmax", x.shape(), "rank >= 1");
  const std::size_t c = x.cols();
  const std::size_t r = x.size() / c;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.data() + i * c;
    double* yr = y.data() + i * c;
    const double mx = *std::max_element(xr, xr + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= s;
  }
  const int ia = a.id();
  return g.record("softmax", std::move(y), {ia}, [ia, r, c](Graph& g, int self, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    const Tensor& y = g.value(self);
    auto dx = g.grad_of(ia);
    for (std::size_t i = 0; i < r; ++i) {
      const double* yr = y.data() + i * c;
      const double* ur = up.data() + i * c;
      double dotp = 0.0;
      for (std::size_t j = 0; j < c; ++j) dotp += ur[j] * yr[j];
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += yr[j] * (ur[j] - dotp);
    }
  });
}

Var logsumexp(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double s = 0.0;
  for (double v : x.values()) s += std::exp(v - mx);
  const int ia = a.id();
  return g.record("logsumexp", Tensor::scalar(mx + std::log(s)), {ia},
                  [ia](Graph& g, int self, std::span<const double> up) {
                    if (!g.requires_grad(ia)) return;
                    const Tensor& x = g.value(ia);
                    const double lse = g.value(self)[0];
                    auto dx = g.grad_of(ia);
                    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += up[0] * std::exp(x[i] - lse);
                  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, bias);
  const Tensor& xv = x.value();
  if (xv.rank() == 0) shape_fail("layer_norm", xv.shape(), "rank >= 1");
  const std::size_t c = xv.cols();
  if (gain.value().shape() != Shape{c} || bias.value().shape() != Shape{c}) {
    shape_fail("layer_norm", xv.shape(), gain.shape());
  }
  const std::size_t r = xv.size() / c;
  Tensor y(xv.shape());
  // Cache normalized values and inverse std per row for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv = std::make_shared<std::vector<double>>(r);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      y[i * c + j] = h * gv[j] + bv[j];
    }
  }
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.record("layer_norm", std::move(y), {ix, ig, ib},
                  [ix, ig, ib, r, c, xhat, inv](Graph& g, int, std::span<const double> up) {
                    const Tensor& gv = g.value(ig);
                    if (g.requires_grad(ig)) {
                      auto dg = g.grad_of(ig);
                      for (std::size_t i = 0; i < r * c; ++i) dg[i % c] += up[i] * (*xhat)[i];
                    }
                    if (g.requires_grad(ib)) {
                      auto db = g.grad_of(ib);
                      for (std::size_t i = 0; i < r * c; ++i) db[i % c] += up[i];
                    }
                    if (!g.requires_grad(ix)) return;
                    auto dx = g.grad_of(ix);
                    const double n = static_cast<double>(c);
                    for (std::size_t i = 0; i < r; ++i) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < c; ++j) {
                        const double dh = up[i * c + j] * gv[j];
                        s1 += dh;
                        s2 += dh * (*xhat)[i * c + j];
                      }
                      for (std::size_t j = 0; j < c; ++j) {
                        const double dh = up[i * c + j] * gv[j];
                        dx[i * c + j] += (*inv)[i] / n * (n * dh - s1 - (*xhat)[i * c + j] * s2);
                      }
                    }
                  });
}

Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values())
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var abs(Var a) {
  return unary("abs", a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var pow_scalar(Var a, double p) {
  for (double v : a.value().values())
    if (v < 0.0) throw DomainError("pow_scalar: negative base " + std::to_string(v));
  return unary("pow_scalar", a, [p](double x) { return std::pow(x, p); },
               [p](double x, double) { return x == 0.0 ? (p == 1.0 ? 1.0 : 0.0) : p * std::pow(x, p - 1.0); });
}

Var clamp(Var a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

namespace {

template <typename Pick>
Var pairwise_select(const char* op, Var a, Var b, Pick pick_a) {
  Graph& g = graph_of(a, b);
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = pick_a(x[i], z[i]) ? x[i] : z[i];
  const int ia = a.id(), ib = b.id();
  return g.record(op, std::move(y), {ia, ib}, [ia, ib, pick_a](Graph& g, int, std::span<const double> up) {
    const Tensor& x = g.value(ia);
    const Tensor& z = g.value(ib);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int target = pick_a(x[i], z[i]) ? ia : ib;
      if (g.requires_grad(target)) g.grad_of(target)[i] += up[i];
    }
  });
}

}  // namespace

Var maximum(Var a, Var b) {
  return pairwise_select("maximum", a, b, [](double x, double z) { return x >= z; });
}

Var minimum(Var a, Var b) {
  return pairwise_select("minimum", a, b, [](double x, double z) { return x <= z; });
}

Var arccos(Var a, double clamp_width, double tol) {
  for (double v : a.value().values()) {
    if (!(v >= -1.0 - tol && v <= 1.0 + tol)) {
      throw DomainError("arccos: input " + std::to_string(v) + " outside [-1, 1] beyond tolerance");
    }
  }
  const double lo = -1.0 + clamp_width, hi = 1.0 - clamp_width;
  return unary(
      "arccos", a, [](double x) { return std::acos(std::clamp(x, -1.0, 1.0)); },
      [lo, hi](double x, double) {
        if (x <= lo || x >= hi) return 0.0;
        return -1.0 / std::sqrt(1.0 - x * x);
      });
}

Var l2_norm(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.rank() > 2) shape_fail("l2_norm", x.shape(), "rank 1 or 2");
  const std::size_t c = x.cols();
  const std::size_t r = x.size() / c;
  Tensor y = x.rank() == 1 ? Tensor::scalar(0.0) : Tensor(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    y[i] = std::sqrt(s);
  }
  const int ia = a.id();
  return g.record("l2_norm", std::move(y), {ia}, [ia, r, c](Graph& g, int self, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    auto dx = g.grad_of(ia);
    for (std::size_t i = 0; i < r; ++i) {
      if (y[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += up[i] * x[i * c + j] / y[i];
    }
  });
}

Var dot(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.value().rank() != 1 || a.shape() != b.shape()) shape_fail("dot", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * z[i];
  const int ia = a.id(), ib = b.id();
  return g.record("dot", Tensor::scalar(s), {ia, ib}, [ia, ib](Graph& g, int, std::span<const double> up) {
    const Tensor& x = g.value(ia);
    const Tensor& z = g.value(ib);
    if (g.requires_grad(ia)) {
      auto dx = g.grad_of(ia);
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += up[0] * z[i];
    }
    if (g.requires_grad(ib)) {
      auto dz = g.grad_of(ib);
      for (std::size_t i = 0; i < x.size(); ++i) dz[i] += up[0] * x[i];
    }
  });
}

Var cosine_similarity(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.value().rank() != 1 || a.shape() != b.shape()) shape_fail("cosine_similarity", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  double xz = 0.0, xx = 0.0, zz = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xz += x[i] * z[i];
    xx += x[i] * x[i];
    zz += z[i] * z[i];
  }
  if (xx == 0.0 || zz == 0.0) throw DomainError("cosine_similarity: zero-norm input");
  const double nx = std::sqrt(xx), nz = std::sqrt(zz);
  const double c = xz / (nx * nz);
  const int ia = a.id(), ib = b.id();
  return g.record("cosine_similarity", Tensor::scalar(c), {ia, ib},
                  [ia, ib, nx, nz, c](Graph& g, int, std::span<const double> up) {
                    const Tensor& x = g.value(ia);
                    const Tensor& z = g.value(ib);
                    if (g.requires_grad(ia)) {
                      auto dx = g.grad_of(ia);
                      for (std::size_t i = 0; i < x.size(); ++i)
                        dx[i] += up[0] * (z[i] / (nx * nz) - c * x[i] / (nx * nx));
                    }
                    if (g.requires_grad(ib)) {
                      auto dz = g.grad_of(ib);
                      for (std::size_t i = 0; i < x.size(); ++i)
                        dz[i] += up[0] * (x[i] / (nx * nz) - c * z[i] / (nz * nz));
                    }
                  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.id();
  return g.record("sum", Tensor::scalar(s), {ia}, [ia](Graph& g, int, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    for (double& d : g.grad_of(ia)) d += up[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var mean_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2) shape_fail("mean_rows", x.shape(), "rank 2");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tensor y(Shape{c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += x[i * c + j];
  for (std::size_t j = 0; j < c; ++j) y[j] /= static_cast<double>(r);
  const int ia = a.id();
  return g.record("mean_rows", std::move(y), {ia}, [ia, r, c](Graph& g, int, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    auto dx = g.grad_of(ia);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += up[j] * inv;
  });
}

Var element(Var a, std::size_t i) {
  Graph& g = graph_of(a);
  if (i >= a.size()) shape_fail("element", a.shape(), "index within bounds");
  const int ia = a.id();
  return g.record("element", Tensor::scalar(a.value()[i]), {ia}, [ia, i](Graph& g, int, std::span<const double> up) {
    if (g.requires_grad(ia)) g.grad_of(ia)[i] += up[0];
  });
}

Var row(Var a, std::size_t r) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2 || r >= x.shape()[0]) shape_fail("row", x.shape(), "rank 2 with row in range");
  const std::size_t c = x.shape()[1];
  Tensor y(Shape{c}, x.row(r));
  const int ia = a.id();
  return g.record("row", std::move(y), {ia}, [ia, r, c](Graph& g, int, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    auto dx = g.grad_of(ia);
    for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += up[j];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Graph& g = graph_of(rows[0]);
  const Shape s0 = rows[0].shape();
  if (s0.size() != 1) shape_fail("stack_rows", s0, "rank 1 rows");
  const std::size_t c = s0[0];
  Tensor y(Shape{rows.size(), c});
  std::vector<int> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    graph_of(rows[0], rows[i]);
    if (rows[i].shape() != s0) shape_fail("stack_rows", s0, rows[i].shape());
    std::copy_n(rows[i].value().data(), c, y.data() + i * c);
    ids.push_back(rows[i].id());
  }
  return g.record("stack_rows", std::move(y), ids, [ids, c](Graph& g, int, std::span<const double> up) {
    for (std::size_t i = 0; i < ids.size(); ++i) accumulate(g, ids[i], up.subspan(i * c, c));
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  Graph& g = graph_of(parts[0]);
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  std::vector<double> data;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.value().rank() > 1) shape_fail("concat", p.shape(), "rank 0 or 1");
    ids.push_back(p.id());
    sizes.push_back(p.size());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  return g.record("concat", Tensor::vector(std::move(data)), ids,
                  [ids, sizes](Graph& g, int, std::span<const double> up) {
                    std::size_t off = 0;
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      accumulate(g, ids[i], up.subspan(off, sizes[i]));
                      off += sizes[i];
                    }
                  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2 || start + count > x.shape()[1]) shape_fail("slice_cols", x.shape(), "columns in range");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tensor y(Shape{r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = x[i * c + start + j];
  const int ia = a.id();
  return g.record("slice_cols", std::move(y), {ia}, [ia, r, c, start, count](Graph& g, int, std::span<const double> up) {
    if (!g.requires_grad(ia)) return;
    auto dx = g.grad_of(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * c + start + j] += up[i * count + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Graph& g = graph_of(parts[0]);
  const std::size_t r = parts[0].value().rows();
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.value().rank() != 2 || p.value().rows() != r) shape_fail("concat_cols", parts[0].shape(), p.shape());
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor y(Shape{r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) y[i * total + off + j] = x[i * widths[k] + j];
    off += widths[k];
  }
  return g.record("concat_cols", std::move(y), ids, [ids, widths, r, total](Graph& g, int, std::span<const double> up) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        auto dx = g.grad_of(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) dx[i * widths[k] + j] += up[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var as_matrix(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 2) return a;
  if (x.rank() != 1) shape_fail("as_matrix", x.shape(), "rank 1 or 2");
  Tensor y(Shape{1, x.size()}, std::vector<double>(x.values().begin(), x.values().end()));
  const int ia = a.id();
  return g.record("as_matrix", std::move(y), {ia}, [ia](Graph& g, int, std::span<const double> up) {
    accumulate(g, ia, up);
  });
}

}  // namespace tase::diff
