#include "sphcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <tuple>
#include <sstream>

namespace sphcast {

using namespace ad;

namespace {

std::pair<std::size_t, std::size_t> window(const Config& cfg, const std::string& key) {
  const auto v = cfg.counts(key);
  if (v.size() != 2 || !v[0] || !v[1]) throw ConfigError("config key `" + key + "` needs two positive counts");
  return {v[0], v[1]};
}

Tensor rows_of(const Tensor& t, std::size_t first, std::size_t count) {
  const std::size_t cols = t.shape[1];
  Tensor out(Shape{count, cols});
  std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(first * cols), count * cols, out.data.begin());
  return out;
}

bool finite_grads(const std::vector<Tensor>& g) {
  for (const auto& t : g)
    if (!all_finite(t.data)) return false;
  return true;
}

}  // namespace

ModelConfig model_config(const Config& cfg, std::size_t n_lat) {
  ModelConfig m;
  m.n_lat = cfg.count("n_lat") ? cfg.count("n_lat") : n_lat;
  m.widths = cfg.counts("widths");
  m.pairs = cfg.count("pairs");
  m.head_dim = cfg.count("head_dim");
  std::tie(m.window_hi_h, m.window_hi_w) = window(cfg, "window_hi");
  std::tie(m.window_lo_h, m.window_lo_w) = window(cfg, "window_lo");
  m.mlp_ratio = cfg.count("mlp_ratio");
  m.d_widths = cfg.counts("d_widths");
  m.dilations = cfg.counts("dilations");
  m.dilation_activation = cfg.num("dilation_activation");
  m.spectral_cap = cfg.num("spectral_cap");
  if (!m.pairs || !m.head_dim || !m.mlp_ratio) throw ConfigError("pairs, head_dim and mlp_ratio must be positive");
  for (auto w : m.widths)
    if (!w) throw ConfigError("widths must be positive");
  for (auto w : m.d_widths)
    if (!w) throw ConfigError("d_widths must be positive");
  return m;
}

void validate_phase_order(const std::vector<std::string>& ids) {
  const std::vector<std::string> adversarial{"1", "2", "3", "4"};
  const std::vector<std::string> legacy{"1", "2a"};
  if (ids != adversarial && ids != legacy) {
    std::string got;
    for (const auto& i : ids) got += (got.empty() ? "" : "->") + i;
    throw ConfigError("invalid phase order " + got + "; expected 1->2->3->4 or 1->2a");
  }
}

std::vector<PhaseSpec> schedule_phases(const Config& cfg) {
  const std::string& s = cfg.str("schedule");
  std::vector<std::string> ids;
  if (s == "adversarial") {
    ids = {"1", "2", "3", "4"};
  } else if (s == "legacy") {
    ids = {"1", "2a"};
  } else {
    std::istringstream in(s);
    for (std::string part; std::getline(in, part, ',');) {
      part.erase(std::remove_if(part.begin(), part.end(), [](char c) { return c == ' ' || c == '>' || c == '-'; }),
                 part.end());
      ids.push_back(part);
    }
  }
  validate_phase_order(ids);
  const std::size_t T = cfg.count("rollout_steps");
  if (T == 0) throw ConfigError("rollout_steps must be positive");
  std::vector<PhaseSpec> out;
  for (const auto& id : ids) {
    PhaseSpec p;
    p.id = id;
    p.steps = cfg.count("steps_" + id);
    if (id == "1") {
      p.rollout = 1;
    } else if (id == "2a") {
      p.rollout = T;
    } else if (id == "2") {
      p.rollout = 1;
      p.train_d = true;
      p.d_per_g = cfg.count("d_per_g_2");
    } else if (id == "3") {
      p.rollout = 1;
      p.adversarial = p.train_d = true;
      p.d_per_g = cfg.count("d_per_g");
    } else {
      p.rollout = T;
      p.adversarial = p.train_d = true;
      p.d_per_g = cfg.count("d_per_g");
      p.replay = true;
    }
    out.push_back(p);
  }
  return out;
}

// ---- Adam ----------------------------------------------------------------------

Adam::Adam(const ParamStore& store, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& e : store.params()) {
    names_.push_back(e.name);
    m_.emplace_back(e.var.shape());
    v_.emplace_back(e.var.shape());
  }
}

void Adam::step(ParamStore& store, const std::vector<Tensor>& grads) {
  if (grads.size() != names_.size()) throw std::invalid_argument("Adam: gradient count differs from parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    Tensor w = store.get(names_[i]).value();
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
    store.assign(names_[i], w);
  }
}

void Adam::export_state(const std::string& prefix, Checkpoint& c) const {
  c.arrays.emplace_back(prefix + "t", Tensor::scalar(static_cast<double>(t_)));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    c.arrays.emplace_back(prefix + "m." + names_[i], m_[i]);
    c.arrays.emplace_back(prefix + "v." + names_[i], v_[i]);
  }
}

void Adam::import_state(const std::string& prefix, const Checkpoint& c) {
  const Tensor* t = c.find(prefix + "t");
  if (!t) throw FormatError("checkpoint lacks optimizer state " + prefix);
  t_ = static_cast<std::uint64_t>(t->item());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const Tensor* m = c.find(prefix + "m." + names_[i]);
    const Tensor* v = c.find(prefix + "v." + names_[i]);
    if (!m || !v || m->shape != m_[i].shape || v->shape != v_[i].shape) {
      throw FormatError("checkpoint optimizer state for " + names_[i] + " missing or misshapen");
    }
    m_[i] = *m;
    v_[i] = *v;
  }
}

// ---- replay buffer --------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

bool ReplayBuffer::push(ReplayEntry e) {
  if (e.lead == 0 || !all_finite(e.state.data)) return false;
  if (items_.size() == capacity_) items_.pop_front();
  e.weight = 1.0;
  items_.push_back(std::move(e));
  return true;
}

std::vector<ReplayEntry> ReplayBuffer::sample(std::size_t n, Rng& rng, double multiplier) const {
  n = std::min(n, items_.size());
  // Partial Fisher-Yates over indices.
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<ReplayEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    ReplayEntry e = items_[idx[i]];
    e.weight = multiplier;
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_log(const LogRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", r.value);
  return std::to_string(r.step) + "," + r.phase + "," + r.name + "," + buf;
}

// ---- trainer --------------------------------------------------------------------

Trainer::Trainer(Config cfg, const Dataset& ds, const SigmaTable& sigma)
    : cfg_(std::move(cfg)),
      ds_(ds),
      sigma_(sigma),
      replay_(cfg_.count("replay_capacity")),
      rng_(static_cast<std::uint64_t>(cfg_.integer("seed")) * 0x9E3779B97F4A7C15ull + 3),
      out_dir_(cfg_.str("out_dir")),
      alpha_(cfg_.num("alpha")),
      gamma_(cfg_.num("gamma")) {
  const auto phases = schedule_phases(cfg_);
  const std::string pair = cfg_.str("adv_pair");
  if (pair != "consecutive" && pair != "literal") throw ConfigError("adv_pair must be consecutive or literal");
  literal_pair_ = pair == "literal";

  const VariableRegistry& reg = ds.registry;
  if (sigma.names.size() != reg.n_predicted()) throw std::invalid_argument("sigma table does not match dataset registry");
  for (std::size_t v = 0; v < reg.n_predicted(); ++v) {
    if (sigma.names[v] != reg[v].name) throw std::invalid_argument("sigma table variable order differs from registry");
  }
  std::size_t T = 1;
  for (const auto& p : phases) T = std::max(T, p.rollout);
  if (sigma.t_max < T) throw std::invalid_argument("sigma table covers fewer lead times than the rollout");

  const double frac = cfg_.num("train_fraction");
  if (!(frac > 0.0 && frac <= 1.0)) throw ConfigError("train_fraction must be in (0, 1]");
  n_train_ = static_cast<std::size_t>(std::floor(frac * static_cast<double>(ds.samples())));
  if (n_train_ < T + 2) throw std::invalid_argument("too few training samples for the rollout length");

  const std::size_t n_pred = reg.n_predicted();
  truth_.reserve(n_train_);
  for (std::size_t i = 0; i < n_train_; ++i) truth_.push_back(normalize(reg, rows_of(ds.sample(i), 0, n_pred)));

  ModelContext ctx;
  ctx.registry = reg;
  for (std::size_t v = 0; v < reg.n_iterated(); ++v) ctx.increment_scale.push_back(sigma.at(v, 1));
  ctx.static_fields = rows_of(ds.sample(0), n_pred, reg.count(Role::AuxStatic));
  const ModelConfig mc = model_config(cfg_, ds.grid.n_lat());
  if (mc.n_lat != ds.grid.n_lat()) throw ConfigError("n_lat differs from the dataset grid");
  const auto seed = static_cast<std::uint64_t>(cfg_.integer("seed"));
  g_ = std::make_unique<Generator>(mc, ctx, seed);
  adam_g_ = Adam(g_->params(), cfg_.num("lr_g"), cfg_.num("beta1"), cfg_.num("beta2"), cfg_.num("adam_eps"));
  const bool need_d = std::any_of(phases.begin(), phases.end(), [](const PhaseSpec& p) { return p.train_d; });
  if (need_d) {
    d_ = std::make_unique<Discriminator>(mc, reg, seed + 0x51ED);
    adam_d_ = Adam(d_->params(), cfg_.num("lr_d"), cfg_.num("beta1"), cfg_.num("beta2"), cfg_.num("adam_eps"));
  }
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    metrics_.open(std::filesystem::path(out_dir_) / "metrics.csv", std::ios::app);
    if (!metrics_) throw std::runtime_error("cannot open metrics log in " + out_dir_);
  }
}

const Tensor& Trainer::aux(std::size_t sample) {
  auto it = aux_.find(sample);
  if (it == aux_.end()) it = aux_.emplace(sample, g_->temporal_aux(ds_.times.at(sample))).first;
  return it->second;
}

Example Trainer::truth_example(std::size_t anchor) const {
  Example e;
  e.start = truth_.at(anchor);
  e.anchor = anchor;
  return e;
}

void Trainer::record(const std::string& phase, const std::string& name, double value) {
  const std::size_t every = std::max<std::size_t>(1, cfg_.count("log_every"));
  if (g_step_ % every) return;
  log_.push_back({g_step_, phase, name, value});
  if (metrics_.is_open()) metrics_ << format_log(log_.back()) << "\n";
  if (sink_) sink_(log_.back());
}

void Trainer::fail(const std::string& phase, const std::string& what) {
  if (!out_dir_.empty()) {
    write_checkpoint(checkpoint(phase, phase_step_), (std::filesystem::path(out_dir_) / "last_good.ckpt").string());
    metrics_.flush();
  }
  throw TrainingError("phase " + phase + ", generator step " + std::to_string(g_step_) + ": " + what +
                      (out_dir_.empty() ? "" : "; wrote last_good.ckpt"));
}

Tensor Trainer::g_predict(const Tensor& start, std::int64_t time) {
  NoGradGuard ng;
  const std::size_t n_iter = ds_.registry.n_iterated();
  const auto it = std::find(ds_.times.begin(), ds_.times.end(), time);
  const Tensor a = it != ds_.times.end() ? aux(static_cast<std::size_t>(it - ds_.times.begin()))
                                         : g_->temporal_aux(time);
  return g_->forward(constant(rows_of(start, 0, n_iter)), a).value();
}

Var Trainer::generator_objective(const PhaseSpec& phase, const Example& ex, std::map<std::string, double>* parts) {
  const std::size_t n_iter = ds_.registry.n_iterated();
  const std::size_t T = phase.rollout;
  if (ex.anchor + ex.lead + T >= n_train_) throw std::out_of_range("example targets fall outside the training range");
  std::vector<Var> preds;
  std::vector<Tensor> targets;
  Var x = constant(rows_of(ex.start, 0, n_iter));
  for (std::size_t j = 0; j < T; ++j) {
    const std::size_t at = ex.anchor + ex.lead + j;
    const Var y = g_->forward(x, aux(at));
    preds.push_back(y);
    targets.push_back(truth_[at + 1]);
    x = slice_rows(y, 0, n_iter);
  }
  const Var l_mse = regression_loss(preds, targets, ds_.registry, sigma_, ds_.grid, ex.weight);
  if (parts) (*parts)["l_mse"] = l_mse.item();
  if (!phase.adversarial) return l_mse;
  std::vector<Var> scores;
  const Var start = constant(ex.start);
  for (std::size_t k = 0; k < T; ++k) {
    const Var prev = k == 0 ? start : preds[k - 1];
    const Var next = literal_pair_ ? preds[0] : preds[k];
    scores.push_back(d_->forward(prev, next).probability);
  }
  const Var l_adv = adversarial_loss_g(scores);
  const Var l_g = generator_loss(l_mse, l_adv, alpha_);
  if (parts) {
    (*parts)["l_adv"] = l_adv.item();
    (*parts)["l_g"] = l_g.item();
  }
  return l_g;
}

void Trainer::d_step(const PhaseSpec& phase) {
  const std::size_t real_anchor = rng_.below(n_train_ - 1);
  Tensor fake_prev;
  std::int64_t fake_time = 0;
  std::vector<ReplayEntry> replayed;
  if (phase.replay && replay_.size() && rng_.uniform() < cfg_.num("replay_prob")) {
    replayed = replay_.sample(1, rng_, 1.0);
  }
  if (!replayed.empty()) {
    fake_prev = replayed[0].state;
    fake_time = ds_.times.at(replayed[0].anchor + replayed[0].lead);
  } else {
    const std::size_t a = rng_.below(n_train_ - 1);
    fake_prev = truth_[a];
    fake_time = ds_.times.at(a);
  }
  const Tensor fake_next = g_predict(fake_prev, fake_time);

  d_->update_spectral_norms();
  const Var prev_r = variable(truth_[real_anchor]);
  const Var next_r = variable(truth_[real_anchor + 1]);
  const auto real = d_->forward(prev_r, next_r);
  const auto fake = d_->forward(constant(fake_prev), constant(fake_next));
  const Var penalty = grad_norm_penalty(real.logit, {prev_r, next_r});
  const Var l_d = discriminator_loss({real.probability}, {fake.probability}, penalty, gamma_);
  if (!std::isfinite(l_d.item())) fail(phase.id, "non-finite discriminator loss");
  const auto gv = grad(l_d, d_->params().vars());
  std::vector<Tensor> grads;
  for (const auto& g : gv) grads.push_back(g.value());
  if (!finite_grads(grads)) fail(phase.id, "non-finite discriminator gradient");
  adam_d_.step(d_->params(), grads);
  record(phase.id, "l_d", l_d.item());
  record(phase.id, "r1", penalty.item());
  record(phase.id, "d_real_acc", real.probability.item() > 0.5 ? 1.0 : 0.0);
  record(phase.id, "d_fake_acc", fake.probability.item() < 0.5 ? 1.0 : 0.0);
}

void Trainer::g_step(const PhaseSpec& phase) {
  const std::size_t T = phase.rollout;
  Example ex;
  std::vector<ReplayEntry> replayed;
  if (phase.replay && replay_.size() && rng_.uniform() < cfg_.num("replay_prob")) {
    replayed = replay_.sample(1, rng_, cfg_.num("replay_multiplier"));
  }
  if (!replayed.empty()) {
    ex.start = replayed[0].state;
    ex.anchor = replayed[0].anchor;
    ex.lead = replayed[0].lead;
    ex.weight = replayed[0].weight;
  } else {
    ex = truth_example(rng_.below(n_train_ - T));
  }
  std::map<std::string, double> parts;
  const Var loss = generator_objective(phase, ex, &parts);
  if (!std::isfinite(loss.item())) fail(phase.id, "non-finite generator loss");
  const auto gv = grad(loss, g_->params().vars());
  std::vector<Tensor> grads;
  for (const auto& g : gv) grads.push_back(g.value());
  if (!finite_grads(grads)) fail(phase.id, "non-finite generator gradient");
  adam_g_.step(g_->params(), grads);
  for (const auto& [name, value] : parts) record(phase.id, name, value);

  if (phase.replay) {
    // Continue this trajectory later from where it ended, if its targets stay in range.
    Tensor s = ex.start;
    std::int64_t t = ds_.times.at(ex.anchor + ex.lead);
    for (std::size_t j = 0; j < T; ++j) {
      s = g_predict(s, t);
      t += ds_.timestep;
    }
    ReplayEntry e{s, ex.lead + T, ex.anchor, 1.0};
    if (e.anchor + e.lead + T < n_train_) replay_.push(std::move(e));
  }
  ++g_step_;
}

void Trainer::run_phase(const PhaseSpec& phase) {
  if ((phase.train_d || phase.adversarial) && !d_) throw std::logic_error("phase " + phase.id + " needs a discriminator");
  phase_id_ = phase.id;
  for (phase_step_ = 0; phase_step_ < phase.steps; ++phase_step_) {
    if (phase.train_d)
      for (std::size_t i = 0; i < phase.d_per_g; ++i) d_step(phase);
    g_step(phase);
  }
  if (metrics_.is_open()) metrics_.flush();
}

void Trainer::run() {
  for (const auto& phase : schedule_phases(cfg_)) {
    run_phase(phase);
    if (!out_dir_.empty()) {
      write_checkpoint(checkpoint(phase.id, phase.steps),
                       (std::filesystem::path(out_dir_) / ("phase_" + phase.id + ".ckpt")).string());
    }
  }
  if (!out_dir_.empty()) {
    write_checkpoint(checkpoint(phase_id_, phase_step_), (std::filesystem::path(out_dir_) / "final.ckpt").string());
  }
}

Checkpoint Trainer::checkpoint(const std::string& phase, std::uint64_t phase_step) const {
  Checkpoint c;
  Config resolved = cfg_;
  resolved.set("n_lat", std::to_string(g_->config().n_lat));
  c.config_text = resolved.dump(false);
  c.registry = ds_.registry;
  c.phase = phase;
  c.step = g_step_;
  c.phase_step = phase_step;
  export_store(g_->params(), "", c);
  adam_g_.export_state("opt.g.", c);
  if (d_) {
    export_store(d_->params(), "", c);
    adam_d_.export_state("opt.d.", c);
  }
  return c;
}

std::unique_ptr<Generator> load_generator(const Checkpoint& c) {
  const Config cfg = Config::parse(c.config_text, "checkpoint config");
  const ModelConfig mc = model_config(cfg, cfg.count("n_lat"));
  ModelContext ctx;
  ctx.registry = c.registry;
  ctx.increment_scale.assign(c.registry.n_iterated(), 1.0);
  ctx.static_fields = Tensor(Shape{c.registry.count(Role::AuxStatic), Grid(mc.n_lat).size()});
  auto g = std::make_unique<Generator>(mc, ctx, 0);
  import_store(g->params(), "", c);
  return g;
}

}  // namespace sphcast
