#pragma once

#include <span>
#include <vector>

#include "tase/diff/graph.h"

// Differentiable primitives. Elementwise binary ops accept equal shapes or a
// right operand whose shape is a trailing suffix of the left one (leading
// batch broadcast, which includes scalars). Anything else raises ShapeError
// naming the primitive and both shapes.
namespace tase::diff {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
// a * s and a / s for a scalar variable s.
Var mul_scalar(Var a, Var s);
Var div_scalar(Var a, Var s);

// (r,n)x(n,m), (n)x(n,m) and (r,n)x(n) products.
Var matmul(Var a, Var b);
Var transpose(Var a);
// x W + b with W of shape (in, out) and b of shape (out).
Var affine(Var x, Var w, Var b);

Var softmax(Var a);  // over the last axis
Var logsumexp(Var a);  // over all elements
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);  // over the last axis

Var gelu(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var abs(Var a);
Var pow_scalar(Var a, double p);  // a >= 0 elementwise
Var clamp(Var a, double lo, double hi);
Var maximum(Var a, Var b);
Var minimum(Var a, Var b);

// Raises DomainError when an input lies outside [-1 - tol, 1 + tol]; inside
// that band the value is acos of the input clamped to [-1, 1], and the
// derivative is zero within `width` of either endpoint.
inline constexpr double kArccosClampWidth = 1e-7;
inline constexpr double kArccosDomainTol = 1e-6;
Var arccos(Var a, double clamp_width = kArccosClampWidth, double tol = kArccosDomainTol);

Var l2_norm(Var a);  // vector -> scalar, matrix -> per-row norms
Var dot(Var a, Var b);
Var cosine_similarity(Var a, Var b);

Var sum(Var a);
Var mean(Var a);
Var mean_rows(Var a);  // (r,c) -> (c)

Var element(Var a, std::size_t i);
Var row(Var a, std::size_t r);
Var stack_rows(std::span<const Var> rows);
Var concat(std::span<const Var> parts);  // rank-1 concatenation
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var as_matrix(Var a);  // vector (n) -> (1,n); matrices pass through

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace tase::diff
