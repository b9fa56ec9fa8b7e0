#pragma once

#include <vector>

#include "inflow/tape.hpp"

// Differentiable primitives. Every op records a node when any input needs a
// gradient. Binary elementwise ops accept equal shapes, a single-element
// operand, or an operand whose shape is a trailing suffix of the other's
// (e.g. [D] against [B, L, D]). Size-1 expansion on other axes goes through
// broadcast_to.
namespace inflow::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var x);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var exp(Var x);
Var tanh(Var x);
Var relu(Var x);
Var square(Var x);
/// Elementwise x^p for a constant exponent.
Var power(Var x, double p);

/// [M, K] x [K, N] -> [M, N]; [B, M, K] x [K, N] -> [B, M, N].
Var matmul(Var a, Var b);
/// Fused x W + b with b of shape [N].
Var affine(Var x, Var w, Var b);

/// Mean over one axis, keeping it with extent 1.
Var mean_axis(Var x, std::size_t axis);
/// Biased (divide-by-N) variance over one axis, keeping it with extent 1.
Var var_axis(Var x, std::size_t axis);
Var sum_all(Var x);
Var mean_all(Var x);

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var reshape(Var x, Shape shape);
/// Expands extent-1 axes of x to the target shape (same rank).
Var broadcast_to(Var x, Shape shape);
/// Swaps the last two axes.
Var transpose_last2(Var x);
/// out[..., j] = x[..., index[j]].
Var gather_last(Var x, const std::vector<std::size_t>& index);
/// Same value, no gradient path.
Var detach(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var x) { return neg(x); }

}  // namespace inflow::ad
