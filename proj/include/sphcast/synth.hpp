#pragma once

#include <cstdint>

#include "sphcast/dataset.hpp"

namespace sphcast {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_lat = 32;
  std::size_t n_steps = 480;
  long shift_cells = 1;          // eastward advection per step
  double forcing = 1.0;          // scale of the stochastic forcing
  std::size_t storms = 3;        // storms alive at any time
  bool pure_rotation = false;    // no forcing, no storms: exact circular shifts
  std::size_t band_limit = 0;    // 0: n_lat / 2 - 1
  double memory_degree = 24.0;   // AR(1) memory rho_l = exp(-(l / memory_degree)^2 / 2)
  std::int64_t start_time = 1514764800;  // 2018-01-01T00:00Z
};

/// Synthetic desk-scale weather. Each iterated channel is a zonal climatology
/// plus an anomaly advected eastward by whole grid cells every step. The
/// anomaly's spherical-harmonic coefficients follow an AR(1) process whose
/// memory shrinks with degree, so large scales are predictable from the
/// previous state while small scales are not. Moving storm lows are added to
/// sp and z. Output-only channels are diagnosed from u, v and r. All iterated
/// fields are band-limited at `band_limit`. Registry statistics are set from
/// the generated data.
Dataset synth_generate(const SynthConfig& cfg, VariableRegistry reg = default_registry());

}  // namespace sphcast
