#include "sphcast/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sphcast/dataset.hpp"
#include "sphcast/haar.hpp"
#include "sphcast/solar.hpp"

namespace sphcast {

using namespace ad;

namespace {

Tensor ones(std::size_t rows) { return Tensor(Shape{rows, 1}, 1.0); }
Tensor zeros(std::size_t rows, std::size_t cols = 1) { return Tensor(Shape{rows, cols}); }

void check_levels(std::size_t n_lat, std::size_t levels) {
  if (levels < 1) throw std::invalid_argument("model needs at least one level");
  const std::size_t f = std::size_t{1} << (levels - 1);
  if (n_lat % f || n_lat / f < 2) {
    throw std::invalid_argument("grid with " + std::to_string(n_lat) + " rows cannot be halved " +
                                std::to_string(levels - 1) + " times");
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t.data)) throw NonFiniteError(std::string(what) + " contains non-finite values");
}

}  // namespace

// ---- generator ---------------------------------------------------------------

Generator::Generator(const ModelConfig& cfg, const ModelContext& ctx, std::uint64_t seed)
    : cfg_(cfg), reg_(ctx.registry), grid_(cfg.n_lat) {
  const std::size_t n = cfg.widths.size();
  check_levels(cfg.n_lat, n);
  const std::size_t n_iter = reg_.n_iterated();
  const std::size_t n_pred = reg_.n_predicted();
  const std::size_t n_static = reg_.count(Role::AuxStatic);
  const std::size_t n_temp = reg_.count(Role::AuxTemporal);
  if (n_iter == 0) throw std::invalid_argument("registry has no iterated variables");
  if (ctx.increment_scale.size() != n_iter) throw std::invalid_argument("increment scale count differs from registry");
  if (n_static && (ctx.static_fields.rank() != 2 || ctx.static_fields.shape[0] != n_static)) {
    throw ShapeError("static fields must have one row per static registry variable");
  }

  Tensor scale(Shape{n_pred, 1}, 1.0);
  for (std::size_t v = 0; v < n_iter; ++v) scale[v] = ctx.increment_scale[v];
  store_.add_buffer("g.scale", scale);
  Tensor stat(Shape{n_static, grid_.size()});
  if (n_static) {
    grid_.check_field(ctx.static_fields, "static fields");
    stat = normalize(reg_, ctx.static_fields, n_pred);
  }
  store_.add_buffer("g.static", stat);

  for (std::size_t l = 0; l < n; ++l) {
    Level lv;
    lv.grid = Grid(cfg.n_lat >> l);
    lv.width = cfg.widths[l];
    lv.heads = std::max<std::size_t>(1, lv.width / cfg.head_dim);
    if (lv.width % lv.heads) throw std::invalid_argument("level width not divisible by head count");
    lv.maps = std::make_unique<SphericalFilterMaps>(Sht(lv.grid));
    const bool hi = l < 2;
    const std::size_t wh = std::min(hi ? cfg.window_hi_h : cfg.window_lo_h, lv.grid.n_lat());
    const std::size_t ww = std::min(hi ? cfg.window_hi_w : cfg.window_lo_w, lv.grid.n_lon());
    lv.plain = std::make_unique<WindowPlan>(lv.grid, wh, ww, false);
    lv.shifted = std::make_unique<WindowPlan>(lv.grid, wh, ww, true);
    if (l + 1 < n) lv.down = downsample_map(lv.grid);
    if (l > 0) levels_.back().up = upsample_map(lv.grid);
    levels_.push_back(std::move(lv));
  }

  Rng rng(seed);
  const std::size_t c0 = cfg.widths[0];
  w_in_ = store_.add("g.in.w", init_matrix(c0, n_iter + n_temp + n_static, rng));
  b_in_ = store_.add("g.in.b", zeros(c0));
  for (std::size_t l = 0; l + 1 < n; ++l) make_group(l, "enc", rng);
  make_group(n - 1, "mid", rng);
  for (std::size_t l = n - 1; l-- > 0;) make_group(l, "dec", rng);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const std::string p = "g.l" + std::to_string(l);
    w_down_.push_back(store_.add(p + ".down", init_matrix(cfg.widths[l + 1], cfg.widths[l], rng)));
    w_up_.push_back(store_.add(p + ".up", init_matrix(cfg.widths[l], cfg.widths[l + 1], rng)));
    w_merge_.push_back(store_.add(p + ".merge", init_matrix(cfg.widths[l], 2 * cfg.widths[l], rng)));
  }
  head_ln_g_ = store_.add("g.head.ln_g", ones(c0));
  head_ln_b_ = store_.add("g.head.ln_b", zeros(c0));
  // Zero head: the untrained model is persistence for iterated variables and
  // climatology for output-only ones.
  w_out_ = store_.add("g.head.w", zeros(n_pred, c0));
  b_out_ = store_.add("g.head.b", zeros(n_pred));
}

void Generator::make_group(std::size_t level, const std::string& tag, Rng& rng) {
  const Level& lv = levels_[level];
  const std::size_t c = lv.width;
  const std::size_t L = lv.maps->l_max();
  const std::size_t hid = cfg_.mlp_ratio * c;
  std::vector<std::pair<SphBlock, SwinBlock>> group;
  for (std::size_t i = 0; i < cfg_.pairs; ++i) {
    const std::string p = "g." + tag + std::to_string(level) + ".p" + std::to_string(i);
    SphBlock s;
    s.ln_g = store_.add(p + ".sph.ln_g", ones(c));
    s.ln_b = store_.add(p + ".sph.ln_b", zeros(c));
    s.a = store_.add(p + ".sph.a", identity_degree_filter(c, L));
    s.b = store_.add(p + ".sph.b", identity_order_filter(c, L));
    s.w1 = store_.add(p + ".sph.w1", init_matrix(c, c, rng));
    s.b1 = store_.add(p + ".sph.b1", zeros(c));
    s.w2 = store_.add(p + ".sph.w2", init_matrix(c, c, rng, 0.5));
    s.b2 = store_.add(p + ".sph.b2", zeros(c));
    SwinBlock w;
    w.shifted = (groups_.size() * cfg_.pairs + i) % 2 == 1;
    w.ln1_g = store_.add(p + ".att.ln1_g", ones(c));
    w.ln1_b = store_.add(p + ".att.ln1_b", zeros(c));
    w.att.wqkv = store_.add(p + ".att.wqkv", init_matrix(3 * c, c, rng));
    w.att.bqkv = store_.add(p + ".att.bqkv", zeros(3 * c));
    w.att.wo = store_.add(p + ".att.wo", init_matrix(c, c, rng, 0.5));
    w.att.bo = store_.add(p + ".att.bo", zeros(c));
    w.att.bias_table = store_.add(p + ".att.bias", zeros(lv.heads, lv.plain->bias_size()));
    w.ln2_g = store_.add(p + ".att.ln2_g", ones(c));
    w.ln2_b = store_.add(p + ".att.ln2_b", zeros(c));
    w.m1 = store_.add(p + ".mlp.w1", init_matrix(hid, c, rng));
    w.c1 = store_.add(p + ".mlp.b1", zeros(hid));
    w.m2 = store_.add(p + ".mlp.w2", init_matrix(c, hid, rng, 0.5));
    w.c2 = store_.add(p + ".mlp.b2", zeros(c));
    group.emplace_back(std::move(s), std::move(w));
  }
  groups_.push_back(std::move(group));
}

Var Generator::sph_block(const Var& x, const SphBlock& p, const Level& lv) const {
  Var h = layer_norm(x, p.ln_g, p.ln_b);
  h = spherical_conv(h, p.a, p.b, *lv.maps);
  h = gelu(pointwise_linear(h, p.w1, p.b1));
  return x + pointwise_linear(h, p.w2, p.b2);
}

Var Generator::swin_block(const Var& x, const SwinBlock& p, const Level& lv) const {
  const WindowPlan& plan = p.shifted ? *lv.shifted : *lv.plain;
  const Var y = x + window_attention(layer_norm(x, p.ln1_g, p.ln1_b), p.att, plan, lv.heads);
  const Var h = gelu(pointwise_linear(layer_norm(y, p.ln2_g, p.ln2_b), p.m1, p.c1));
  return y + pointwise_linear(h, p.m2, p.c2);
}

Tensor Generator::temporal_aux(std::int64_t time) const {
  const auto idx = reg_.indices(Role::AuxTemporal);
  if (idx.empty()) return Tensor(Shape{0, grid_.size()});
  const Tensor phys = solar_channels(time, grid_);
  if (phys.shape[0] != idx.size()) throw std::logic_error("registry temporal auxiliaries differ from solar channels");
  return normalize(reg_, phys, idx.front());
}

Var Generator::head(const Var& x, const Tensor& aux, long skip_off) const {
  const std::size_t n_iter = reg_.n_iterated();
  if (x.shape() != Shape{n_iter, grid_.size()}) {
    throw ShapeError("generator input " + shape_str(x.shape()) + " does not match registry/grid " +
                     shape_str(Shape{n_iter, grid_.size()}));
  }
  if (aux.shape != Shape{reg_.count(Role::AuxTemporal), grid_.size()}) throw ShapeError("temporal auxiliary shape");

  const std::size_t n = levels_.size();
  std::vector<Var> parts{x};
  if (aux.shape[0]) parts.push_back(constant(aux));
  const Tensor& stat = store_.buffer("g.static");
  if (stat.shape[0]) parts.push_back(constant(stat));
  Var h = pointwise_linear(concat_rows(parts), w_in_, b_in_);

  auto run_group = [&](std::size_t g, std::size_t level) {
    for (const auto& [s, w] : groups_[g]) {
      h = sph_block(h, s, levels_[level]);
      h = swin_block(h, w, levels_[level]);
    }
  };

  std::vector<Var> skips;
  std::size_t g = 0;
  for (std::size_t l = 0; l + 1 < n; ++l) {
    run_group(g++, l);
    skips.push_back(h);
    h = matmul(w_down_[l], linear_map(h, levels_[l].down));
  }
  run_group(g++, n - 1);
  for (std::size_t l = n - 1; l-- > 0;) {
    const Var up = matmul(w_up_[l], linear_map(h, levels_[l].up));
    const Var skip = static_cast<long>(l) == skip_off ? constant(Tensor(skips[l].shape())) : skips[l];
    h = matmul(w_merge_[l], concat_rows({up, skip}));
    run_group(g++, l);
  }
  const Var out = pointwise_linear(layer_norm(h, head_ln_g_, head_ln_b_), w_out_, b_out_);
  return out * constant(store_.buffer("g.scale"));
}

Var Generator::forward(const Var& x, const Tensor& aux) const {
  const std::size_t n_iter = reg_.n_iterated();
  const Var out = head(x, aux);
  std::vector<Var> rows{x + slice_rows(out, 0, n_iter)};
  if (reg_.n_output_only()) rows.push_back(slice_rows(out, n_iter, reg_.n_output_only()));
  return concat_rows(rows);
}

Var Generator::forward_without_skip(const Var& x, const Tensor& aux, std::size_t level) const {
  if (level + 1 >= levels_.size()) throw std::invalid_argument("no skip connection at level " + std::to_string(level));
  const std::size_t n_iter = reg_.n_iterated();
  const Var out = head(x, aux, static_cast<long>(level));
  std::vector<Var> rows{x + slice_rows(out, 0, n_iter)};
  if (reg_.n_output_only()) rows.push_back(slice_rows(out, n_iter, reg_.n_output_only()));
  return concat_rows(rows);
}

// ---- discriminator -----------------------------------------------------------

Discriminator::Discriminator(const ModelConfig& cfg, const VariableRegistry& reg, std::uint64_t seed)
    : cfg_(cfg), grid_(cfg.n_lat) {
  if (cfg.d_widths.empty()) throw std::invalid_argument("discriminator needs at least one width");
  if (cfg.n_lat < 4 || (cfg.n_lat & (cfg.n_lat - 1))) {
    throw std::invalid_argument("discriminator grid rows must be a power of two >= 4 to reach 2x4");
  }
  const std::size_t n_pred = reg.n_predicted();
  auto width = [&](std::size_t l) { return cfg.d_widths[std::min(l, cfg.d_widths.size() - 1)]; };
  Rng rng(seed);
  const double cap = cfg.spectral_cap;

  std::size_t l = 0;
  for (std::size_t rows = cfg.n_lat; rows >= 2; rows /= 2, ++l) {
    Level lv;
    lv.grid = Grid(rows);
    lv.width = width(l);
    levels_.push_back(std::move(lv));
  }
  w_in_ = Weight(store_, "d.in.w", init_matrix(width(0), 2 * n_pred, rng), true, rng, cap);
  b_in_ = store_.add("d.in.b", zeros(width(0)));
  for (std::size_t i = 0; i + 1 < levels_.size(); ++i) {
    Level& lv = levels_[i];
    const std::size_t c = lv.width;
    const std::string p = "d.l" + std::to_string(i);
    const Sht sht(lv.grid);
    lv.maps = std::make_unique<SphericalFilterMaps>(sht);
    lv.plan = std::make_unique<GridConvPlan>(lv.grid, cfg.dilations, cfg.dilation_activation);
    lv.down = downsample_map(lv.grid);
    // Spectral filter vectors are not capped: they act per channel and start at identity.
    lv.a = store_.add(p + ".sph.a", identity_degree_filter(c, sht.l_max()));
    lv.b = store_.add(p + ".sph.b", identity_order_filter(c, sht.l_max()));
    lv.w_sph = Weight(store_, p + ".sph.w", init_matrix(c, c, rng), true, rng, cap);
    lv.b_sph = store_.add(p + ".sph.bias", zeros(c));
    lv.dil = store_.add(p + ".conv.dil", Tensor(Shape{lv.grid.n_lat(), cfg.dilations.size()}));
    lv.w_conv = Weight(store_, p + ".conv.w", init_matrix(c, 9 * c, rng), true, rng, cap);
    lv.b_conv = store_.add(p + ".conv.bias", zeros(c));
    lv.w_down = Weight(store_, p + ".down.w", init_matrix(levels_[i + 1].width, c, rng), true, rng, cap);
    lv.b_down = store_.add(p + ".down.bias", zeros(levels_[i + 1].width));
  }
  haar_ = haar_map(grid_);
  w_haar_ = Weight(store_, "d.haar.w", init_matrix(width(1), 4 * n_pred, rng), true, rng, cap);
  b_haar_ = store_.add("d.haar.b", zeros(width(1)));
  const std::size_t flat = levels_.back().width * levels_.back().grid.size();
  w_head_ = Weight(store_, "d.head.w", Tensor(Shape{1, flat}), true, rng, cap);
  b_head_ = store_.add("d.head.b", Tensor::scalar(0.0));
}

DiscriminatorOutput Discriminator::forward(const Var& prev, const Var& next, bool naive) const {
  const Shape want{levels_.empty() ? 0 : w_in_.raw().shape()[1] / 2, grid_.size()};
  if (prev.shape() != want || next.shape() != want) {
    throw ShapeError("discriminator inputs " + shape_str(prev.shape()) + ", " + shape_str(next.shape()) +
                     " do not match " + shape_str(want));
  }
  const double slope = cfg_.leaky_slope;
  Var h = pointwise_linear(concat_rows({prev, next}), w_in_(), b_in_);
  for (std::size_t i = 0; i + 1 < levels_.size(); ++i) {
    const Level& lv = levels_[i];
    h = h + leaky_relu(pointwise_linear(spherical_conv(h, lv.a, lv.b, *lv.maps), lv.w_sph(), lv.b_sph), slope);
    const Var w = dilation_weights(lv.dil, *lv.plan);
    h = h + leaky_relu(grid_conv(h, lv.w_conv(), w, *lv.plan, naive) + lv.b_conv, slope);
    h = pointwise_linear(linear_map(h, lv.down), lv.w_down(), lv.b_down);
    if (i == 0) {
      // Haar subbands of the later state enter at the first coarse level.
      const std::size_t c = next.shape()[0];
      const std::size_t pc = levels_[1].grid.size();
      const Var bands = reshape(linear_map(next, haar_), Shape{4 * c, pc});
      h = h + pointwise_linear(bands, w_haar_(), b_haar_);
    }
  }
  const Var flat = reshape(h, Shape{1, h.size()});
  const Var logit = sum(flat * w_head_()) + b_head_;
  return {logit, sigmoid(clamp(logit, -30.0, 30.0))};
}

// ---- rollout -----------------------------------------------------------------

WeatherState generator_step(const Generator& g, const WeatherState& state) {
  const VariableRegistry& reg = g.registry();
  const std::size_t n_iter = reg.n_iterated();
  const std::size_t n_out = reg.n_output_only();
  const std::size_t P = g.grid().size();
  if (state.fields.shape != Shape{reg.n_predicted(), P}) {
    throw ShapeError("state " + shape_str(state.fields.shape) + " does not match registry channels " +
                     shape_str(Shape{reg.n_predicted(), P}));
  }
  Tensor x(Shape{n_iter, P});
  std::copy_n(state.fields.data.begin(), n_iter * P, x.data.begin());
  require_finite(x, "input state");

  Tensor inc;
  {
    NoGradGuard ng;
    inc = g.head(constant(normalize(reg, x)), g.temporal_aux(state.time)).value();
  }
  WeatherState next;
  next.time = state.time + kTimestepSeconds;
  next.fields = Tensor(state.fields.shape);
  for (std::size_t v = 0; v < n_iter; ++v) {
    const double s = reg[v].std;
    for (std::size_t p = 0; p < P; ++p) next.fields[v * P + p] = x[v * P + p] + inc[v * P + p] * s;
  }
  for (std::size_t v = n_iter; v < n_iter + n_out; ++v) {
    const double s = reg[v].std;
    const double m = reg[v].mean;
    for (std::size_t p = 0; p < P; ++p) next.fields[v * P + p] = inc[v * P + p] * s + m;
  }
  require_finite(next.fields, "predicted state");
  return next;
}

std::vector<WeatherState> rollout(const Generator& g, const WeatherState& state0, std::size_t k) {
  std::vector<WeatherState> out;
  out.reserve(k);
  const WeatherState* cur = &state0;
  for (std::size_t i = 0; i < k; ++i) {
    try {
      out.push_back(generator_step(g, *cur));
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("rollout step " + std::to_string(i + 1) + ": " + e.what());
    }
    cur = &out.back();
  }
  return out;
}

WeatherState state_from_sample(const Dataset& ds, std::size_t i) {
  const Tensor s = ds.sample(i);
  const std::size_t n = ds.registry.n_predicted();
  const std::size_t P = ds.grid.size();
  WeatherState st;
  st.time = ds.times.at(i);
  st.fields = Tensor(Shape{n, P});
  std::copy_n(s.data.begin(), n * P, st.fields.data.begin());
  return st;
}

}  // namespace sphcast
