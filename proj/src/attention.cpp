#include "sphcast/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sphcast {

using namespace ad;

WindowPlan::WindowPlan(const Grid& grid, std::size_t h, std::size_t w, bool shifted) : grid_(grid), h_(h), w_(w) {
  const std::size_t H = grid.n_lat();
  const std::size_t W = grid.n_lon();
  if (h == 0 || w == 0 || H % h || W % w) {
    throw ShapeError("window " + std::to_string(h) + "x" + std::to_string(w) + " does not divide grid " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  if (shifted) {
    shift_r_ = h < H ? h / 2 : 0;
    shift_c_ = w < W ? w / 2 : 0;
  }
  const std::size_t wr = H / h;
  const std::size_t wc = W / w;
  windows_ = wr * wc;
  const std::size_t T = h * w;
  order_.resize(grid.size());
  wrapped_.resize(grid.size());
  std::vector<Triplet> trip;
  trip.reserve(grid.size());
  for (std::size_t a = 0; a < wr; ++a) {
    for (std::size_t b = 0; b < wc; ++b) {
      const std::size_t n = a * wc + b;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t rs = a * h + i;
          const std::size_t cs = b * w + j;
          const std::size_t r = (rs + shift_r_) % H;
          const std::size_t c = (cs + shift_c_) % W;
          const std::size_t pos = n * T + i * w + j;
          order_[pos] = r * W + c;
          wrapped_[pos] = rs + shift_r_ >= H;
          trip.push_back({pos, r * W + c, 1.0});
        }
      }
    }
  }
  gather_ = SparseMap::make(grid.size(), grid.size(), std::move(trip));
  rel_.resize(T * T);
  for (std::size_t s = 0; s < T; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t dr = s / w + h - 1 - t / w;
      const std::size_t dc = s % w + w - 1 - t % w;
      rel_[s * T + t] = dr * (2 * w - 1) + dc;
    }
  }
}

double WindowPlan::mask(std::size_t n, std::size_t s, std::size_t t) const {
  const std::size_t T = tokens();
  return wrapped_[n * T + s] == wrapped_[n * T + t] ? 0.0 : -1e30;
}

namespace {

// Scores for one (window, head): A[s][t] = softmax_t(q_s . k_t / sqrt(d) + bias + mask).
void attention_probs(const Tensor& qkv, const Tensor& table, const WindowPlan& plan, std::size_t heads,
                     std::size_t n, std::size_t head, std::vector<double>& a) {
  const std::size_t T = plan.tokens();
  const std::size_t C = qkv.shape[0] / 3;
  const std::size_t d = C / heads;
  const std::size_t P = qkv.shape[1];
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double* q = qkv.data.data() + head * d * P + n * T;
  const double* k = qkv.data.data() + (C + head * d) * P + n * T;
  const double* bias = table.data.data() + head * plan.bias_size();
  a.assign(T * T, 0.0);
  for (std::size_t e = 0; e < d; ++e) {
    const double* qe = q + e * P;
    const double* ke = k + e * P;
    for (std::size_t s = 0; s < T; ++s) {
      const double qs = qe[s];
      double* row = a.data() + s * T;
      for (std::size_t t = 0; t < T; ++t) row[t] += qs * ke[t];
    }
  }
  for (std::size_t s = 0; s < T; ++s) {
    double* row = a.data() + s * T;
    double mx = -1e300;
    for (std::size_t t = 0; t < T; ++t) {
      row[t] = row[t] * scale + bias[plan.bias_index(s, t)] + plan.mask(n, s, t);
      mx = std::max(mx, row[t]);
    }
    double z = 0.0;
    for (std::size_t t = 0; t < T; ++t) z += (row[t] = std::exp(row[t] - mx));
    for (std::size_t t = 0; t < T; ++t) row[t] /= z;
  }
}

}  // namespace

Var window_attention_core(const Var& qkv, const Var& bias_table, const WindowPlan& plan, std::size_t heads) {
  const Shape& s = qkv.shape();
  if (s.size() != 2 || s[0] % 3 || s[1] != plan.grid().size()) {
    throw ShapeError("window attention: qkv shape " + shape_str(s) + " invalid");
  }
  const std::size_t C = s[0] / 3;
  if (heads == 0 || C % heads) {
    throw ShapeError("window attention: " + std::to_string(C) + " channels not divisible into " +
                     std::to_string(heads) + " heads");
  }
  if (bias_table.shape() != Shape{heads, plan.bias_size()}) {
    throw ShapeError("window attention: bias table " + shape_str(bias_table.shape()) + " invalid");
  }
  const std::size_t T = plan.tokens();
  const std::size_t d = C / heads;
  const std::size_t P = s[1];

  auto forward = [plan, heads, C, T, d, P](const std::vector<const Tensor*>& v) {
    const Tensor& x = *v[0];
    Tensor out(Shape{C, P});
    std::vector<double> a;
    for (std::size_t n = 0; n < plan.windows(); ++n) {
      for (std::size_t h = 0; h < heads; ++h) {
        attention_probs(x, *v[1], plan, heads, n, h, a);
        for (std::size_t e = 0; e < d; ++e) {
          const double* ve = x.data.data() + (2 * C + h * d + e) * P + n * T;
          double* oe = out.data.data() + (h * d + e) * P + n * T;
          for (std::size_t si = 0; si < T; ++si) {
            const double* row = a.data() + si * T;
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += row[t] * ve[t];
            oe[si] = acc;
          }
        }
      }
    }
    return out;
  };

  auto backward = [plan, heads, C, T, d, P](const std::vector<Var>& in, const Var&, const Var& g) {
    const Tensor& x = in[0].value();
    const Tensor& table = in[1].value();
    const Tensor& go = g.value();
    Tensor dx(x.shape);
    Tensor dt(table.shape);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> a;
    std::vector<double> da(T * T);
    for (std::size_t n = 0; n < plan.windows(); ++n) {
      for (std::size_t h = 0; h < heads; ++h) {
        attention_probs(x, table, plan, heads, n, h, a);
        std::fill(da.begin(), da.end(), 0.0);
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t ch = h * d + e;
          const double* ve = x.data.data() + (2 * C + ch) * P + n * T;
          const double* ge = go.data.data() + ch * P + n * T;
          double* dve = dx.data.data() + (2 * C + ch) * P + n * T;
          for (std::size_t si = 0; si < T; ++si) {
            const double gs = ge[si];
            const double* arow = a.data() + si * T;
            double* darow = da.data() + si * T;
            for (std::size_t t = 0; t < T; ++t) {
              dve[t] += arow[t] * gs;
              darow[t] += gs * ve[t];
            }
          }
        }
        // Softmax backward: dS = A * (dA - rowsum(A * dA)).
        for (std::size_t si = 0; si < T; ++si) {
          const double* arow = a.data() + si * T;
          double* row = da.data() + si * T;
          double dot = 0.0;
          for (std::size_t t = 0; t < T; ++t) dot += arow[t] * row[t];
          for (std::size_t t = 0; t < T; ++t) row[t] = arow[t] * (row[t] - dot);
        }
        double* dbias = dt.data.data() + h * plan.bias_size();
        for (std::size_t si = 0; si < T; ++si) {
          for (std::size_t t = 0; t < T; ++t) dbias[plan.bias_index(si, t)] += da[si * T + t];
        }
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t ch = h * d + e;
          const double* qe = x.data.data() + ch * P + n * T;
          const double* ke = x.data.data() + (C + ch) * P + n * T;
          double* dqe = dx.data.data() + ch * P + n * T;
          double* dke = dx.data.data() + (C + ch) * P + n * T;
          for (std::size_t si = 0; si < T; ++si) {
            const double* row = da.data() + si * T;
            double acc = 0.0;
            const double qs = qe[si] * scale;
            for (std::size_t t = 0; t < T; ++t) {
              acc += row[t] * ke[t];
              dke[t] += row[t] * qs;
            }
            dqe[si] += acc * scale;
          }
        }
      }
    }
    return std::vector<Var>{constant(std::move(dx)), constant(std::move(dt))};
  };
  return make_op("window_attention", {qkv, bias_table}, forward, backward, false);
}

Var window_attention(const Var& x, const AttentionWeights& p, const WindowPlan& plan, std::size_t heads) {
  plan.grid().check_field(x.value(), "window_attention");
  const Var qkv = linear_map(pointwise_linear(x, p.wqkv, p.bqkv), plan.gather());
  const Var att = window_attention_core(qkv, p.bias_table, plan, heads);
  return pointwise_linear(linear_map(att, plan.gather()->adjoint()), p.wo, p.bo);
}

}  // namespace sphcast
