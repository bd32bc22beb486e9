#pragma once

#include <vector>

#include "sphcast/autodiff.hpp"
#include "sphcast/linear_map.hpp"

namespace sphcast::ad {

// Elementwise arithmetic with trailing-dimension broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }

/// Sums `x` down to `shape`, which must broadcast to x's shape.
Var sum_to(const Var& x, const Shape& shape);
Var broadcast_to(const Var& x, const Shape& shape);
/// Sum of all elements, as a rank-0 scalar.
Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);
/// Transpose of a rank-2 array.
Var transpose(const Var& x);
/// Rank-2 matrix product.
Var matmul(const Var& a, const Var& b);

/// Concatenates rank-2 arrays with equal column counts along rows.
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, std::size_t start, std::size_t count);
/// Zero-extends a (count, cols) array into rows [start, start+count) of `total` rows.
Var embed_rows(const Var& x, std::size_t start, std::size_t total);

enum class Fn { Exp, Log, Sigmoid, Gelu, LeakyRelu, Pow, Clamp };

struct Pointwise {
  Fn fn;
  int order = 0;  // derivative order evaluated
  double p0 = 0.0;
  double p1 = 0.0;
};

double eval_pointwise(const Pointwise& spec, double x);
Var pointwise(const Var& x, Pointwise spec);

Var exp(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);
Var gelu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var pow(const Var& x, double p);
Var square(const Var& x);
Var clamp(const Var& x, double lo, double hi);

Var detach(const Var& x);

/// Applies `map` along the last dimension of a rank-2 (rows, in) array.
Var linear_map(const Var& x, const LinearMapPtr& map);

/// Softmax over the last dimension of a rank-2 array.
Var softmax_rows(const Var& x);

}  // namespace sphcast::ad
