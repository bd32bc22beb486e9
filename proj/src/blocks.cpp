#include "sphcast/blocks.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sphcast {

using namespace ad;

namespace {

constexpr double kMasked = -1e30;

std::size_t idx(std::size_t l, long m) { return Sht::index(l, m); }

}  // namespace

SphericalFilterMaps::SphericalFilterMaps(const Sht& sht) : sht_(sht) {
  const std::size_t L = sht.l_max();
  const std::size_t n = sht.n_coeffs();
  analysis = sht.analysis_map();
  synthesis = sht.synthesis_map();
  std::vector<Triplet> sw, ea, er, ei;
  for (std::size_t l = 0; l <= L; ++l) {
    for (long m = -static_cast<long>(l); m <= static_cast<long>(l); ++m) {
      const std::size_t i = idx(l, m);
      const auto am = static_cast<std::size_t>(std::labs(m));
      ea.push_back({i, l, 1.0});
      er.push_back({i, L + am, 1.0});
      if (m != 0) {
        sw.push_back({i, idx(l, -m), 1.0});
        ei.push_back({i, L - am, m > 0 ? -1.0 : 1.0});
      }
    }
  }
  swap_orders = SparseMap::make(n, n, std::move(sw));
  expand_degree = SparseMap::make(n, L + 1, std::move(ea));
  expand_real = SparseMap::make(n, 2 * L + 1, std::move(er));
  expand_imag = SparseMap::make(n, 2 * L + 1, std::move(ei));
}

Var spherical_filter(const Var& coeffs, const Var& a, const Var& b, const SphericalFilterMaps& maps) {
  const std::size_t L = maps.l_max();
  if (coeffs.shape().size() != 2 || coeffs.shape()[1] != maps.sht().n_coeffs()) {
    throw ShapeError("spherical_filter: coefficients " + shape_str(coeffs.shape()) + " do not match l_max " +
                     std::to_string(L));
  }
  const std::size_t c = coeffs.shape()[0];
  if (a.shape() != Shape{c, L + 1} || b.shape() != Shape{c, 2 * L + 1}) {
    throw ShapeError("spherical_filter: filter shapes " + shape_str(a.shape()) + " / " + shape_str(b.shape()) +
                     " do not match " + std::to_string(c) + " channels at l_max " + std::to_string(L));
  }
  const Var ga = linear_map(a, maps.expand_degree);
  const Var re = ga * linear_map(b, maps.expand_real);
  const Var im = ga * linear_map(b, maps.expand_imag);
  return re * coeffs + im * linear_map(coeffs, maps.swap_orders);
}

Var spherical_conv(const Var& x, const Var& a, const Var& b, const SphericalFilterMaps& maps) {
  maps.sht().grid().check_field(x.value(), "spherical_conv");
  return linear_map(spherical_filter(linear_map(x, maps.analysis), a, b, maps), maps.synthesis);
}

Tensor identity_degree_filter(std::size_t channels, std::size_t l_max) { return Tensor(Shape{channels, l_max + 1}, 1.0); }

Tensor identity_order_filter(std::size_t channels, std::size_t l_max) {
  Tensor b(Shape{channels, 2 * l_max + 1});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t m = 0; m <= l_max; ++m) b.row(c)[l_max + m] = 1.0;
  }
  return b;
}

SpectralNormState make_spectral_state(std::size_t rows, std::size_t cols, Rng& rng, double cap) {
  SpectralNormState s;
  s.cap = cap;
  s.u = Tensor(Shape{rows});
  s.v = Tensor(Shape{cols});
  double nu = 0.0;
  double nv = 0.0;
  for (auto& x : s.u.data) {
    x = rng.normal();
    nu += x * x;
  }
  for (auto& x : s.v.data) {
    x = rng.normal();
    nv += x * x;
  }
  for (auto& x : s.u.data) x /= std::sqrt(nu);
  for (auto& x : s.v.data) x /= std::sqrt(nv);
  return s;
}

namespace {

std::pair<std::size_t, std::size_t> matrix_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("spectral norm needs a matrix, got a scalar");
  const std::size_t rows = shape[0];
  return {rows, rows ? numel(shape) / rows : 0};
}

double bilinear(const Tensor& w, const SpectralNormState& s, std::size_t rows, std::size_t cols) {
  double sigma = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * s.v[c];
    sigma += s.u[r] * acc;
  }
  return sigma;
}

}  // namespace

double power_iteration(const Tensor& w, SpectralNormState& s) {
  const auto [rows, cols] = matrix_dims(w.shape);
  if (s.u.size() != rows || s.v.size() != cols) throw ShapeError("spectral norm state does not match weight shape");
  std::vector<double> v(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) v[c] += w[r * cols + c] * s.u[r];
  }
  double nv = 0.0;
  for (double x : v) nv += x * x;
  if (nv == 0.0) return 0.0;
  nv = std::sqrt(nv);
  for (std::size_t c = 0; c < cols; ++c) s.v[c] = v[c] / nv;
  std::vector<double> u(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) u[r] += w[r * cols + c] * s.v[c];
  }
  double nu = 0.0;
  for (double x : u) nu += x * x;
  if (nu == 0.0) return 0.0;
  nu = std::sqrt(nu);
  for (std::size_t r = 0; r < rows; ++r) s.u[r] = u[r] / nu;
  return bilinear(w, s, rows, cols);
}

Var spectral_cap(const Var& w, const SpectralNormState& s) {
  const auto [rows, cols] = matrix_dims(w.shape());
  if (s.u.size() != rows || s.v.size() != cols) throw ShapeError("spectral norm state does not match weight shape");
  const double sigma = bilinear(w.value(), s, rows, cols);
  if (!(sigma > s.cap)) return w;
  Tensor outer(w.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) outer[r * cols + c] = s.u[r] * s.v[c];
  }
  const Var sig = sum(w * constant(std::move(outer)));
  return w * (pow(sig, -1.0) * s.cap);
}

Var spectral_norm_apply(const Var& w, SpectralNormState& state) {
  power_iteration(w.value(), state);
  return spectral_cap(w, state);
}

Weight::Weight(ParamStore& store, const std::string& name, Tensor init, bool spectral, Rng& rng, double cap)
    : store_(&store), name_(name), spectral_(spectral), cap_(cap) {
  const Shape shape = init.shape;
  raw_ = store.add(name, std::move(init));
  if (spectral) {
    const auto [rows, cols] = matrix_dims(shape);
    SpectralNormState s = make_spectral_state(rows, cols, rng, cap);
    store.add_buffer(name + ".sn_u", std::move(s.u));
    store.add_buffer(name + ".sn_v", std::move(s.v));
    store.add_buffer(name + ".sn_cap", Tensor::scalar(cap));
  }
}

Var Weight::operator()() const {
  if (!spectral()) return raw_;
  SpectralNormState s{store_->buffer(name_ + ".sn_u"), store_->buffer(name_ + ".sn_v"), cap_};
  return spectral_cap(raw_, s);
}

void spectral_power_step(ParamStore& store) {
  for (const auto& e : store.params()) {
    auto& bufs = store.buffers();
    auto u = bufs.find(e.name + ".sn_u");
    if (u == bufs.end()) continue;
    Tensor& v = store.buffer(e.name + ".sn_v");
    SpectralNormState s{u->second, v, store.buffer(e.name + ".sn_cap").item()};
    power_iteration(e.var.value(), s);
    u->second = std::move(s.u);
    v = std::move(s.v);
  }
}

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng, double gain) {
  Tensor w(Shape{rows, cols});
  const double lim = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (auto& x : w.data) x = rng.uniform(-lim, lim);
  return w;
}

// ---- grid conv ------------------------------------------------------------

GridConvPlan::GridConvPlan(const Grid& grid, std::vector<std::size_t> dilations, double activation)
    : grid_(grid), dilations_(std::move(dilations)) {
  const std::size_t n_lat = grid.n_lat();
  const std::size_t n_lon = grid.n_lon();
  const std::size_t nd = dilations_.size();
  if (nd == 0) throw std::invalid_argument("grid_conv needs at least one dilation");
  for (std::size_t d : dilations_) {
    if (d == 0 || d >= n_lon) {
      throw std::invalid_argument("dilation " + std::to_string(d) + " invalid for " + std::to_string(n_lon) +
                                  " longitudes");
    }
  }
  active_.assign(n_lat * nd, 0);
  rows_.assign(nd, {});
  mask_ = Tensor(Shape{n_lat, nd});
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double stretch = 1.0 / std::cos(grid.lat_deg(j) * std::numbers::pi / 180.0);
    bool any = false;
    for (std::size_t i = 0; i < nd; ++i) {
      const bool on = stretch >= activation * static_cast<double>(dilations_[i]);
      active_[j * nd + i] = on;
      mask_[j * nd + i] = on ? 0.0 : kMasked;
      if (on) rows_[i].push_back(j);
      any = any || on;
    }
    if (!any) throw std::invalid_argument("no dilation active on latitude row " + std::to_string(j));
  }

  auto build = [&](std::size_t d, const std::vector<std::size_t>& rows) {
    Gather g;
    const std::size_t q = rows.size() * n_lon;
    g.positions = q;
    std::vector<Triplet> im, ex, sc;
    im.reserve(9 * q);
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const long j = static_cast<long>(rows[ri]);
      for (std::size_t k = 0; k < n_lon; ++k) {
        const std::size_t pos = ri * n_lon + k;
        ex.push_back({pos, rows[ri], 1.0});
        sc.push_back({rows[ri] * n_lon + k, pos, 1.0});
        for (long dr = -1; dr <= 1; ++dr) {
          long r = j + dr;
          std::size_t roll = 0;
          if (r < 0) {
            r = -1 - r;
            roll = n_lon / 2;
          } else if (r >= static_cast<long>(n_lat)) {
            r = 2 * static_cast<long>(n_lat) - 1 - r;
            roll = n_lon / 2;
          }
          for (long dc = -1; dc <= 1; ++dc) {
            const long shift = dc * static_cast<long>(d);
            const auto n = static_cast<long>(n_lon);
            const auto col = static_cast<std::size_t>(((static_cast<long>(k + roll) + shift) % n + n) % n);
            const auto tap = static_cast<std::size_t>((dr + 1) * 3 + (dc + 1));
            im.push_back({tap * q + pos, static_cast<std::size_t>(r) * n_lon + col, 1.0});
          }
        }
      }
    }
    g.im2col = SparseMap::make(9 * q, grid.size(), std::move(im));
    g.expand = SparseMap::make(q, n_lat, std::move(ex));
    g.scatter = SparseMap::make(grid.size(), q, std::move(sc));
    return g;
  };
  std::vector<std::size_t> all(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) all[j] = j;
  for (std::size_t i = 0; i < nd; ++i) {
    fast_.push_back(build(dilations_[i], rows_[i]));
    naive_.push_back(build(dilations_[i], all));
  }
}

Var dilation_weights(const Var& logits, const GridConvPlan& plan) {
  if (logits.shape() != plan.logit_mask().shape) {
    throw ShapeError("dilation weight table " + shape_str(logits.shape()) + ", expected " +
                     shape_str(plan.logit_mask().shape));
  }
  return softmax_rows(logits + constant(plan.logit_mask()));
}

Var grid_conv(const Var& x, const Var& kernel, const Var& weights, const GridConvPlan& plan, bool naive) {
  const Grid& g = plan.grid();
  g.check_field(x.value(), "grid_conv");
  const std::size_t cin = x.shape()[0];
  const std::size_t nd = plan.dilations().size();
  if (kernel.shape().size() != 2 || kernel.shape()[1] != cin * 9) {
    throw ShapeError("grid_conv: kernel " + shape_str(kernel.shape()) + " does not fit " + std::to_string(cin) +
                     " input channels");
  }
  if (weights.shape() != Shape{g.n_lat(), nd}) {
    throw ShapeError("grid_conv: weight table " + shape_str(weights.shape()) + " malformed");
  }
  const Var wt = transpose(weights);
  Var y;
  for (std::size_t i = 0; i < nd; ++i) {
    const auto& gather = naive ? plan.naive(i) : plan.optimized(i);
    if (gather.positions == 0) continue;
    const Var cols = reshape(linear_map(x, gather.im2col), Shape{cin * 9, gather.positions});
    const Var wd = linear_map(slice_rows(wt, i, 1), gather.expand);
    const Var part = linear_map(matmul(kernel, cols) * wd, gather.scatter);
    y = y.defined() ? y + part : part;
  }
  return y;
}

// ---- resampling -----------------------------------------------------------

LinearMapPtr downsample_map(const Grid& fine) {
  const Grid coarse = fine.coarsened();
  const std::size_t nl = fine.n_lon();
  const std::size_t cl = coarse.n_lon();
  std::vector<double> alpha(coarse.n_lat());
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < coarse.n_lat(); ++i) {
    const double wt = fine.cell_weight(2 * i);
    const double wb = fine.cell_weight(2 * i + 1);
    alpha[i] = wt / (wt + wb);
    for (std::size_t k = 0; k < cl; ++k) {
      const std::size_t o = i * cl + k;
      for (std::size_t dk = 0; dk < 2; ++dk) {
        t.push_back({o, 2 * i * nl + 2 * k + dk, 0.5 * alpha[i]});
        t.push_back({o, (2 * i + 1) * nl + 2 * k + dk, 0.5 * (1.0 - alpha[i])});
      }
    }
  }
  const std::size_t rows = coarse.n_lat();
  // bottom + alpha (top - bottom): a constant stays exactly constant.
  auto kernel = [alpha, rows, nl, cl](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < rows; ++i) {
      const double* a = in.data() + 2 * i * nl;
      const double* b = a + nl;
      for (std::size_t k = 0; k < cl; ++k) {
        const double top = 0.5 * (a[2 * k] + a[2 * k + 1]);
        const double bot = 0.5 * (b[2 * k] + b[2 * k + 1]);
        out[i * cl + k] = bot + alpha[i] * (top - bot);
      }
    }
  };
  return SparseMap::make(coarse.size(), fine.size(), std::move(t), kernel);
}

LinearMapPtr upsample_map(const Grid& coarse) {
  const Grid fine = coarse.refined();
  const std::size_t m = coarse.n_lat();
  const std::size_t cl = coarse.n_lon();
  const std::size_t fl = fine.n_lon();
  struct Row {
    std::size_t r0, r1;
    double t;
  };
  std::vector<Row> rows(fine.n_lat());
  for (std::size_t i = 0; i < fine.n_lat(); ++i) {
    // Fine row i sits at coarse row coordinate i/2 - 1/4.
    long r0 = i % 2 ? static_cast<long>(i / 2) : static_cast<long>(i / 2) - 1;
    double t = i % 2 ? 0.25 : 0.75;
    long r1 = r0 + 1;
    if (r0 < 0) {
      r0 = r1 = 0;
      t = 0.0;
    } else if (r1 >= static_cast<long>(m)) {
      r0 = r1 = static_cast<long>(m) - 1;
      t = 0.0;
    }
    rows[i] = {static_cast<std::size_t>(r0), static_cast<std::size_t>(r1), t};
  }
  std::vector<Triplet> trip;
  for (std::size_t i = 0; i < fine.n_lat(); ++i) {
    const auto& r = rows[i];
    for (std::size_t k = 0; k < fl; ++k) {
      const std::size_t c0 = k / 2;
      const std::size_t c1 = (c0 + (k % 2)) % cl;
      const double s = k % 2 ? 0.5 : 0.0;
      const std::size_t o = i * fl + k;
      trip.push_back({o, r.r0 * cl + c0, (1 - r.t) * (1 - s)});
      trip.push_back({o, r.r0 * cl + c1, (1 - r.t) * s});
      trip.push_back({o, r.r1 * cl + c0, r.t * (1 - s)});
      trip.push_back({o, r.r1 * cl + c1, r.t * s});
    }
  }
  auto kernel = [rows, cl, fl](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* a = in.data() + rows[i].r0 * cl;
      const double* b = in.data() + rows[i].r1 * cl;
      const double t = rows[i].t;
      for (std::size_t k = 0; k < fl; ++k) {
        const std::size_t c0 = k / 2;
        double va = a[c0];
        double vb = b[c0];
        if (k % 2) {
          const std::size_t c1 = (c0 + 1) % cl;
          va += 0.5 * (a[c1] - va);
          vb += 0.5 * (b[c1] - vb);
        }
        out[i * fl + k] = va + t * (vb - va);
      }
    }
  };
  return SparseMap::make(fine.size(), coarse.size(), std::move(trip), kernel);
}

// ---- small layers ---------------------------------------------------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.shape().size() != 2) throw ShapeError("layer_norm expects (channels, points)");
  const std::size_t c = x.shape()[0];
  const std::size_t p = x.shape()[1];
  const double inv = 1.0 / static_cast<double>(c);
  const Var xc = x - sum_to(x, Shape{1, p}) * inv;
  const Var var = sum_to(xc * xc, Shape{1, p}) * inv;
  return xc * pow(var + eps, -0.5) * gamma + beta;
}

Var pointwise_linear(const Var& x, const Var& w, const Var& b) {
  const Var y = matmul(w, x);
  return b.defined() ? y + b : y;
}

}  // namespace sphcast
