#include "sphcast/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sphcast/random.hpp"
#include "sphcast/sht.hpp"

namespace sphcast {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Storm {
  Tensor shape;  // band-limited unit low at birth position, (1, points)
  std::size_t born = 0;
  std::size_t life = 1;
  double depth = 0.0;
};

// Zonal mean state per iterated channel as a polynomial in s = sin(lat).
double zonal(std::size_t v, double s) {
  const double s2 = s * s;
  switch (v) {
    case 0: return 5600.0 - 250.0 * s2;
    case 1: return 285.0 - 40.0 * s2;
    case 2: return 75.0 - 30.0 * s2;
    case 3: return 5.0 + 60.0 * s2 * (1.0 - s2);
    case 4: return 0.0;
    default: return 1013.0 - 8.0 * s2;
  }
}

constexpr double kAmplitude[6] = {80.0, 4.0, 12.0, 7.0, 7.0, 5.0};

}  // namespace

Dataset synth_generate(const SynthConfig& cfg, VariableRegistry reg) {
  if (cfg.n_steps < 2) throw std::invalid_argument("synthetic dataset needs at least 2 steps");
  const std::vector<std::string> expect = {"z", "t", "r", "u", "v", "sp", "10w", "tp", "terrain"};
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (i >= reg.n_stored() || reg[i].name != expect[i]) {
      throw std::invalid_argument("synthetic generator needs the default registry layout");
    }
  }
  const Grid grid(cfg.n_lat);
  const std::size_t P = grid.size();
  const std::size_t L = cfg.band_limit ? cfg.band_limit : cfg.n_lat / 2 - 1;
  const Sht sht(grid, L);
  const std::size_t N = sht.n_coeffs();
  Rng rng(cfg.seed);

  // Per-degree memory and amplitude of the anomaly process.
  std::vector<double> rho(L + 1), sigma(L + 1);
  double var = 0.0;
  for (std::size_t l = 1; l <= L; ++l) {
    const double x = static_cast<double>(l) / cfg.memory_degree;
    rho[l] = std::exp(-0.5 * x * x);
    sigma[l] = 1.0 / (1.0 + static_cast<double>(l));
    var += (2.0 * l + 1.0) * sigma[l] * sigma[l] / (4.0 * std::numbers::pi);
  }
  const double unit = 1.0 / std::sqrt(var);

  Dataset ds;
  ds.grid = grid;
  ds.registry = reg;

  Tensor clim(Shape{6, P});
  for (std::size_t j = 0; j < grid.n_lat(); ++j) {
    const double s = std::sin(grid.lat_deg(j) * kDeg);
    for (std::size_t v = 0; v < 6; ++v)
      for (std::size_t k = 0; k < grid.n_lon(); ++k) clim[v * P + j * grid.n_lon() + k] = zonal(v, s);
  }

  auto draw = [&](std::size_t l) { return sigma[l] * unit * rng.normal(); };
  Tensor coeffs(Shape{6, N});
  for (std::size_t v = 0; v < 6; ++v)
    for (std::size_t l = 1; l <= L; ++l)
      for (long m = -static_cast<long>(l); m <= static_cast<long>(l); ++m)
        coeffs[v * N + Sht::index(l, m)] = kAmplitude[v] * draw(l);
  Tensor anomaly = sht.synthesis(coeffs);

  Tensor terrain_c(Shape{1, N});
  for (std::size_t l = 1; l <= L; ++l)
    for (long m = -static_cast<long>(l); m <= static_cast<long>(l); ++m) terrain_c[Sht::index(l, m)] = 500.0 * draw(l);
  const Tensor terrain = sht.synthesis(terrain_c);

  const bool rotate_only = cfg.pure_rotation;
  std::vector<Storm> storms;
  auto spawn = [&](std::size_t t) {
    Storm s;
    const double lat = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(10.0, 35.0);
    const double lon = rng.uniform(0.0, 360.0);
    const double width = rng.uniform(5.0, 9.0) * kDeg;
    Tensor g(Shape{1, P});
    const double sl = std::sin(lat * kDeg), cl = std::cos(lat * kDeg);
    for (std::size_t j = 0; j < grid.n_lat(); ++j) {
      const double phi = grid.lat_deg(j) * kDeg;
      for (std::size_t k = 0; k < grid.n_lon(); ++k) {
        const double c = std::sin(phi) * sl + std::cos(phi) * cl * std::cos(grid.lon_deg(k) * kDeg - lon * kDeg);
        const double d = std::acos(std::clamp(c, -1.0, 1.0));
        g[j * grid.n_lon() + k] = -std::exp(-0.5 * d * d / (width * width));
      }
    }
    s.shape = sht.synthesis(sht.analysis(g));
    s.born = t;
    s.life = 12 + rng.below(16);
    s.depth = rng.uniform(15.0, 30.0);
    return s;
  };
  if (!rotate_only)
    for (std::size_t i = 0; i < cfg.storms; ++i) {
      storms.push_back(spawn(0));
      storms.back().born = rng.below(storms.back().life);
    }

  const std::size_t stored = reg.n_stored();
  for (std::size_t t = 0; t < cfg.n_steps; ++t) {
    if (t > 0) {
      anomaly = shift_lon(grid, anomaly, cfg.shift_cells);
      if (!rotate_only) {
        coeffs = sht.analysis(anomaly);
        for (std::size_t v = 0; v < 6; ++v)
          for (std::size_t l = 1; l <= L; ++l) {
            const double keep = rho[l];
            const double kick = std::sqrt(1.0 - keep * keep) * cfg.forcing * kAmplitude[v];
            for (long m = -static_cast<long>(l); m <= static_cast<long>(l); ++m) {
              double& c = coeffs[v * N + Sht::index(l, m)];
              c = keep * c + kick * draw(l);
            }
          }
        anomaly = sht.synthesis(coeffs);
      }
      for (auto& s : storms) {
        s.shape = shift_lon(grid, s.shape, cfg.shift_cells);
        if (t >= s.born + s.life) s = spawn(t);
      }
    }
    Tensor state(Shape{stored, P});
    for (std::size_t i = 0; i < 6 * P; ++i) state[i] = clim[i] + anomaly[i];
    for (const auto& s : storms) {
      const double age = static_cast<double>(t - std::min(t, s.born));
      const double amp = t < s.born ? 0.0 : s.depth * std::sin(std::numbers::pi * (age + 0.5) / static_cast<double>(s.life));
      for (std::size_t p = 0; p < P; ++p) {
        state[5 * P + p] += amp * s.shape[p];
        state[0 * P + p] += 8.0 * amp * s.shape[p];
      }
    }
    for (std::size_t p = 0; p < P; ++p) {
      const double u = state[3 * P + p];
      const double v = state[4 * P + p];
      state[6 * P + p] = std::sqrt(u * u + v * v);
      state[7 * P + p] = std::max(0.0, state[2 * P + p] - 70.0) * 0.05;
      state[8 * P + p] = terrain[p];
    }
    ds.append(cfg.start_time + static_cast<std::int64_t>(t) * kTimestepSeconds, state);
  }
  update_registry_stats(ds);
  return ds;
}

}  // namespace sphcast
