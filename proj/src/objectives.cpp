#include "sphcast/objectives.hpp"

#include <cmath>

namespace sphcast {

using namespace ad;

namespace {
constexpr char kStatsMagic[4] = {'K', 'Y', 'S', 'T'};
constexpr std::uint32_t kStatsVersion = 1;
}  // namespace

double SigmaTable::at(std::size_t v, std::size_t k) const {
  if (v >= names.size() || k == 0 || k > t_max) {
    throw std::out_of_range("sigma table has no entry for variable " + std::to_string(v) + " at step " +
                            std::to_string(k));
  }
  return values[v * t_max + k - 1];
}

void write_sigma(ByteWriter& w, const SigmaTable& s) {
  w.u32(static_cast<std::uint32_t>(s.names.size()));
  w.u32(static_cast<std::uint32_t>(s.t_max));
  for (const auto& n : s.names) w.str(n);
  for (double v : s.values) w.f64(v);
}

SigmaTable read_sigma(ByteReader& r) {
  SigmaTable s;
  const std::uint32_t n = r.u32();
  s.t_max = r.u32();
  if (n > 100000 || s.t_max > 100000) throw FormatError(r.what() + ": implausible sigma table size");
  s.names.resize(n);
  for (auto& name : s.names) name = r.str();
  s.values.resize(n * s.t_max);
  for (auto& v : s.values) v = r.f64();
  return s;
}

void write_stats(const StatsFile& s, const std::string& path) {
  ByteWriter w;
  w.bytes(kStatsMagic, 4);
  w.u32(kStatsVersion);
  write_registry(w, s.registry);
  write_sigma(w, s.sigma);
  w.save(path);
}

StatsFile read_stats(const std::string& path) {
  ByteReader r = ByteReader::load(path);
  r.magic(kStatsMagic);
  if (r.u32() != kStatsVersion) throw FormatError(path + ": unsupported stats version");
  StatsFile s;
  s.registry = read_registry(r);
  s.sigma = read_sigma(r);
  if (r.remaining()) throw FormatError(path + ": trailing bytes");
  return s;
}

SigmaTable compute_sigma_stats(const Dataset& ds, std::size_t t_max, double sigma_floor) {
  if (t_max == 0) throw std::invalid_argument("t_max must be positive");
  if (ds.samples() < t_max + 1) {
    throw std::invalid_argument("dataset of " + std::to_string(ds.samples()) + " samples cannot span lag " +
                                std::to_string(t_max));
  }
  const VariableRegistry& reg = ds.registry;
  const std::size_t P = ds.grid.size();
  const std::size_t nl = ds.grid.n_lon();
  SigmaTable s;
  s.t_max = t_max;
  const std::size_t nv = reg.n_predicted();
  for (std::size_t v = 0; v < nv; ++v) s.names.push_back(reg[v].name);
  s.values.assign(nv * t_max, kInf);

  auto weighted_std = [&](std::size_t v, std::size_t lag) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    const double inv = 1.0 / reg[v].std;
    for (std::size_t i = 0; i + lag < ds.samples(); ++i) {
      const float* a = ds.values.data() + i * ds.sample_size() + v * P;
      const float* b = ds.values.data() + (i + lag) * ds.sample_size() + v * P;
      for (std::size_t p = 0; p < P; ++p) {
        const double w = ds.grid.cell_weight(p / nl);
        const double x = lag ? (static_cast<double>(b[p]) - a[p]) * inv : (a[p] - reg[v].mean) * inv;
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
      }
    }
    const double mean = s1 / s0;
    const double var = std::max(0.0, s2 / s0 - mean * mean);
    return std::max(std::sqrt(var), sigma_floor);
  };
  for (std::size_t v = 0; v < nv; ++v) {
    if (reg[v].role == Role::Iterated) {
      for (std::size_t k = 1; k <= t_max; ++k) s.values[v * t_max + k - 1] = weighted_std(v, k);
    } else {
      s.values[v * t_max] = weighted_std(v, 0);
    }
  }
  return s;
}

double robust_f(double x) { return 200.0 * std::log1p(x * x / 200.0); }

Var robust_f(const Var& x) { return log(square(x) * (1.0 / 200.0) + 1.0) * 200.0; }

Var regression_loss(const std::vector<Var>& pred, const std::vector<Tensor>& truth, const VariableRegistry& reg,
                    const SigmaTable& sigma, const Grid& grid, double scale) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw std::invalid_argument("regression loss: trajectories misaligned (" + std::to_string(pred.size()) + " vs " +
                                std::to_string(truth.size()) + " steps)");
  }
  const std::size_t nv = reg.n_predicted();
  if (sigma.names.size() != nv) throw std::invalid_argument("regression loss: sigma table does not cover the registry");
  if (pred.size() > sigma.t_max) throw std::invalid_argument("regression loss: sigma table shorter than trajectory");
  const std::size_t P = grid.size();
  const double T = static_cast<double>(pred.size());
  Var total;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].shape() != Shape{nv, P} || truth[k].shape != Shape{nv, P}) {
      throw ShapeError("regression loss: step " + std::to_string(k) + " has shape " + shape_str(pred[k].shape()));
    }
    Tensor inv_sigma(Shape{nv, 1});
    Tensor weight(Shape{nv, P});
    for (std::size_t v = 0; v < nv; ++v) {
      const double s = sigma.at(v, k + 1);
      if (std::isinf(s)) continue;
      inv_sigma[v] = 1.0 / s;
      for (std::size_t p = 0; p < P; ++p) weight[v * P + p] = scale * reg[v].weight * grid.cell_weight(p / grid.n_lon()) / T;
    }
    const Var z = (pred[k] - constant(truth[k])) * constant(std::move(inv_sigma));
    const Var term = sum(robust_f(z) * constant(std::move(weight)));
    total = total.defined() ? total + term : term;
  }
  return total;
}

namespace {

Var mean_log(const std::vector<Var>& p, bool complement) {
  if (p.empty()) throw std::invalid_argument("no discriminator scores");
  Var acc;
  for (const auto& s : p) {
    const Var q = complement ? (s * -1.0) + 1.0 : s;
    const Var t = log(clamp(q, kProbEps, 1.0));
    acc = acc.defined() ? acc + t : t;
  }
  return acc * (1.0 / static_cast<double>(p.size()));
}

}  // namespace

Var adversarial_loss_g(const std::vector<Var>& scores) { return mean_log(scores, false) * -1.0; }

Var discriminator_loss(const std::vector<Var>& real, const std::vector<Var>& fake, const Var& penalty, double gamma) {
  const Var base = (mean_log(real, false) + mean_log(fake, true)) * -1.0;
  return penalty.defined() ? base + penalty * (0.5 * gamma) : base;
}

Var generator_loss(const Var& l_mse, const Var& l_adv, double alpha) { return l_mse + l_adv * alpha; }

}  // namespace sphcast
