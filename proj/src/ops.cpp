#include "sphcast/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sphcast::ad {

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// Strides of `in` laid over `out` (trailing alignment), zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = in.size(); k-- > 0;) {
    const std::size_t od = k + (out.size() - in.size());
    if (in[k] != 1) st[od] = s;
    s *= in[k];
  }
  return st;
}

bool broadcasts_to(const Shape& in, const Shape& out) {
  if (in.size() > out.size()) return numel(in) == 1 && numel(out) == 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t od = k + (out.size() - in.size());
    if (in[k] != 1 && in[k] != out[od]) return false;
  }
  return true;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
  const std::size_t n = numel(out);
  const std::size_t r = out.size();
  if (r == 0) {
    if (n) f(0, 0, 0);
    return;
  }
  const std::size_t last = out[r - 1];
  if (last == 0 || n == 0) return;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; o += last) {
    for (std::size_t k = 0; k < last; ++k) f(o + k, ia + k * sa[r - 1], ib + k * sb[r - 1]);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <class F>
Tensor binary_kernel(const Tensor& a, const Tensor& b, const char* op, F f) {
  if (a.shape == b.shape) {
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const Shape shape = broadcast_shape(a.shape, b.shape, op);
  Tensor out(shape);
  if (b.size() == 1 && numel(shape) == a.size()) {
    const double bv = b[0];
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], bv);
    return out;
  }
  if (a.size() == 1 && numel(shape) == b.size()) {
    const double av = a[0];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(av, b[i]);
    return out;
  }
  const auto sa = broadcast_strides(a.shape, shape);
  const auto sb = broadcast_strides(b.shape, shape);
  for_each_broadcast(shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = f(a[ia], b[ib]); });
  return out;
}

Tensor sum_to_kernel(const Tensor& x, const Shape& shape) {
  Tensor out(shape);
  const auto st = broadcast_strides(shape, x.shape);
  const std::vector<std::size_t> zero(x.shape.size(), 0);
  for_each_broadcast(x.shape, st, zero, [&](std::size_t o, std::size_t io, std::size_t) { out[io] += x[o]; });
  return out;
}

Tensor broadcast_kernel(const Tensor& x, const Shape& shape) {
  Tensor out(shape);
  const auto st = broadcast_strides(x.shape, shape);
  const std::vector<std::size_t> zero(shape.size(), 0);
  for_each_broadcast(shape, st, zero, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = x[ix]; });
  return out;
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto m = static_cast<Eigen::Index>(a.shape[0]);
  const auto k = static_cast<Eigen::Index>(a.shape[1]);
  const auto n = static_cast<Eigen::Index>(b.shape[1]);
  Tensor out(Shape{a.shape[0], b.shape[1]});
  if (m == 0 || n == 0 || k == 0) return out;
  Eigen::Map<RowMat>(out.data.data(), m, n).noalias() =
      Eigen::Map<const RowMat>(a.data.data(), m, k) * Eigen::Map<const RowMat>(b.data.data(), k, n);
  return out;
}

Tensor transpose_kernel(const Tensor& x) {
  const std::size_t r = x.shape[0];
  const std::size_t c = x.shape[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return out;
}

void require_rank2(const Var& x, const char* op) {
  if (x.shape().size() != 2) throw ShapeError(std::string(op) + ": expected rank-2 input, got " + shape_str(x.shape()));
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return make_op(
      "add", {a, b}, [](const auto& v) { return binary_kernel(*v[0], *v[1], "add", std::plus<>()); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{in[0].requires_grad() ? sum_to(g, in[0].shape()) : Var{},
                                in[1].requires_grad() ? sum_to(g, in[1].shape()) : Var{}};
      });
}

Var sub(const Var& a, const Var& b) {
  return make_op(
      "sub", {a, b}, [](const auto& v) { return binary_kernel(*v[0], *v[1], "sub", std::minus<>()); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{in[0].requires_grad() ? sum_to(g, in[0].shape()) : Var{},
                                in[1].requires_grad() ? sum_to(neg(g), in[1].shape()) : Var{}};
      });
}

Var mul(const Var& a, const Var& b) {
  return make_op(
      "mul", {a, b}, [](const auto& v) { return binary_kernel(*v[0], *v[1], "mul", std::multiplies<>()); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{in[0].requires_grad() ? sum_to(mul(g, in[1]), in[0].shape()) : Var{},
                                in[1].requires_grad() ? sum_to(mul(g, in[0]), in[1].shape()) : Var{}};
      });
}

Var div(const Var& a, const Var& b) {
  return make_op(
      "div", {a, b}, [](const auto& v) { return binary_kernel(*v[0], *v[1], "div", std::divides<>()); },
      [](const std::vector<Var>& in, const Var& out, const Var& g) {
        return std::vector<Var>{in[0].requires_grad() ? sum_to(div(g, in[1]), in[0].shape()) : Var{},
                                in[1].requires_grad() ? sum_to(neg(div(mul(g, out), in[1])), in[1].shape()) : Var{}};
      });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return make_op(
      "scale", {a},
      [c](const auto& v) {
        Tensor out = *v[0];
        for (auto& x : out.data) x *= c;
        return out;
      },
      [c](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{scale(g, c)}; });
}

Var add_scalar(const Var& a, double c) {
  return make_op(
      "add_scalar", {a},
      [c](const auto& v) {
        Tensor out = *v[0];
        for (auto& x : out.data) x += c;
        return out;
      },
      [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var sum_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (!broadcasts_to(shape, x.shape())) {
    throw ShapeError("sum_to: " + shape_str(shape) + " does not broadcast to " + shape_str(x.shape()));
  }
  return make_op(
      "sum_to", {x}, [shape](const auto& v) { return sum_to_kernel(*v[0], shape); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{broadcast_to(g, in[0].shape())};
      });
}

Var broadcast_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (!broadcasts_to(x.shape(), shape)) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(shape));
  }
  return make_op(
      "broadcast_to", {x}, [shape](const auto& v) { return broadcast_kernel(*v[0], shape); },
      [](const std::vector<Var>& in, const Var&, const Var& g) { return std::vector<Var>{sum_to(g, in[0].shape())}; });
}

Var sum(const Var& x) {
  if (x.shape().empty()) return x;
  return make_op(
      "sum", {x},
      [](const auto& v) {
        double s = 0.0;
        for (double e : v[0]->data) s += e;
        return Tensor::scalar(s);
      },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{broadcast_to(g, in[0].shape())};
      });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var reshape(const Var& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return make_op(
      "reshape", {x},
      [shape](const auto& v) { return Tensor(shape, v[0]->data); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{reshape(g, in[0].shape())};
      });
}

Var transpose(const Var& x) {
  require_rank2(x, "transpose");
  return make_op(
      "transpose", {x}, [](const auto& v) { return transpose_kernel(*v[0]); },
      [](const std::vector<Var>&, const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var matmul(const Var& a, const Var& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return make_op(
      "matmul", {a, b}, [](const auto& v) { return matmul_kernel(*v[0], *v[1]); },
      [](const std::vector<Var>& in, const Var&, const Var& g) {
        return std::vector<Var>{in[0].requires_grad() ? matmul(g, transpose(in[1])) : Var{},
                                in[1].requires_grad() ? matmul(transpose(in[0]), g) : Var{}};
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].shape().at(1);
  std::vector<std::size_t> starts;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.shape()[1] != cols) throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
    starts.push_back(rows);
    rows += p.shape()[0];
  }
  return make_op(
      "concat_rows", parts,
      [rows, cols](const auto& v) {
        Tensor out(Shape{rows, cols});
        std::size_t off = 0;
        for (const Tensor* t : v) {
          std::copy(t->data.begin(), t->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
          off += t->size();
        }
        return out;
      },
      [starts](const std::vector<Var>& in, const Var&, const Var& g) {
        std::vector<Var> out;
        for (std::size_t i = 0; i < in.size(); ++i) {
          out.push_back(in[i].requires_grad() ? slice_rows(g, starts[i], in[i].shape()[0]) : Var{});
        }
        return out;
      });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  if (start + count > rows) throw ShapeError("slice_rows: range exceeds " + shape_str(x.shape()));
  return make_op(
      "slice_rows", {x},
      [start, count, cols](const auto& v) {
        Tensor out(Shape{count, cols});
        const auto first = v[0]->data.begin() + static_cast<std::ptrdiff_t>(start * cols);
        std::copy(first, first + static_cast<std::ptrdiff_t>(count * cols), out.data.begin());
        return out;
      },
      [start, rows](const std::vector<Var>&, const Var&, const Var& g) {
        return std::vector<Var>{embed_rows(g, start, rows)};
      });
}

Var embed_rows(const Var& x, std::size_t start, std::size_t total) {
  require_rank2(x, "embed_rows");
  const std::size_t count = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  if (start + count > total) throw ShapeError("embed_rows: range exceeds target rows");
  return make_op(
      "embed_rows", {x},
      [start, total, cols](const auto& v) {
        Tensor out(Shape{total, cols});
        std::copy(v[0]->data.begin(), v[0]->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * cols));
        return out;
      },
      [start, count](const std::vector<Var>&, const Var&, const Var& g) {
        return std::vector<Var>{slice_rows(g, start, count)};
      });
}

double eval_pointwise(const Pointwise& s, double x) {
  const int k = s.order;
  switch (s.fn) {
    case Fn::Exp:
      return std::exp(x);
    case Fn::Log: {
      if (k == 0) return std::log(x);
      double fact = 1.0;
      for (int i = 2; i < k; ++i) fact *= i;
      return ((k % 2) ? 1.0 : -1.0) * fact / std::pow(x, k);
    }
    case Fn::Sigmoid: {
      const double y = stable_sigmoid(x);
      switch (k) {
        case 0: return y;
        case 1: return y * (1 - y);
        case 2: return y * (1 - y) * (1 - 2 * y);
        case 3: return y * (1 - y) * (1 - 6 * y + 6 * y * y);
        default: break;
      }
      throw SecondOrderError("sigmoid: derivative order " + std::to_string(k) + " unsupported");
    }
    case Fn::Gelu: {
      const double pdf = normal_pdf(x);
      switch (k) {
        case 0: return x * normal_cdf(x);
        case 1: return normal_cdf(x) + x * pdf;
        case 2: return pdf * (2 - x * x);
        case 3: return pdf * (x * x * x - 4 * x);
        default: break;
      }
      throw SecondOrderError("gelu: derivative order " + std::to_string(k) + " unsupported");
    }
    case Fn::LeakyRelu:
      if (k == 0) return x > 0 ? x : s.p0 * x;
      if (k == 1) return x > 0 ? 1.0 : s.p0;
      return 0.0;
    case Fn::Pow: {
      double c = 1.0;
      for (int i = 0; i < k; ++i) c *= (s.p0 - i);
      if (c == 0.0) return 0.0;
      return c * std::pow(x, s.p0 - k);
    }
    case Fn::Clamp:
      if (k == 0) return std::min(std::max(x, s.p0), s.p1);
      if (k == 1) return (x > s.p0 && x < s.p1) ? 1.0 : 0.0;
      return 0.0;
  }
  return 0.0;
}

Var pointwise(const Var& x, Pointwise spec) {
  static constexpr const char* names[] = {"exp", "log", "sigmoid", "gelu", "leaky_relu", "pow", "clamp"};
  std::string name = names[static_cast<int>(spec.fn)];
  if (spec.order > 0) name += "'" + std::to_string(spec.order);
  return make_op(
      std::move(name), {x},
      [spec](const auto& v) {
        Tensor out = *v[0];
        for (auto& e : out.data) e = eval_pointwise(spec, e);
        return out;
      },
      [spec](const std::vector<Var>& in, const Var&, const Var& g) {
        Pointwise d = spec;
        ++d.order;
        return std::vector<Var>{mul(g, pointwise(in[0], d))};
      });
}

Var exp(const Var& x) { return pointwise(x, {Fn::Exp}); }
Var log(const Var& x) { return pointwise(x, {Fn::Log}); }
Var sigmoid(const Var& x) { return pointwise(x, {Fn::Sigmoid}); }
Var gelu(const Var& x) { return pointwise(x, {Fn::Gelu}); }
Var leaky_relu(const Var& x, double slope) { return pointwise(x, {Fn::LeakyRelu, 0, slope}); }
Var pow(const Var& x, double p) { return pointwise(x, {Fn::Pow, 0, p}); }
Var square(const Var& x) { return mul(x, x); }
Var clamp(const Var& x, double lo, double hi) { return pointwise(x, {Fn::Clamp, 0, lo, hi}); }

Var detach(const Var& x) { return constant(x.value()); }

Var linear_map(const Var& x, const LinearMapPtr& map) {
  require_rank2(x, "linear_map");
  if (x.shape()[1] != map->in_size()) {
    throw ShapeError("linear_map: input width " + std::to_string(x.shape()[1]) + ", map expects " +
                     std::to_string(map->in_size()));
  }
  return make_op(
      "linear_map", {x},
      [map](const auto& v) {
        const Tensor& in = *v[0];
        const std::size_t rows = in.shape[0];
        Tensor out(Shape{rows, map->out_size()});
        for (std::size_t r = 0; r < rows; ++r) map->apply(in.row(r), out.row(r));
        return out;
      },
      [map](const std::vector<Var>&, const Var&, const Var& g) {
        return std::vector<Var>{linear_map(g, map->adjoint())};
      });
}

Var softmax_rows(const Var& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  Tensor mx(Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = x.value().row(r);
    mx[r] = cols ? *std::max_element(row.begin(), row.end()) : 0.0;
  }
  const Var e = exp(sub(x, constant(std::move(mx))));
  return div(e, sum_to(e, Shape{rows, 1}));
}

}  // namespace sphcast::ad
