#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sphcast/grid.hpp"
#include "sphcast/linear_map.hpp"
#include "sphcast/ops.hpp"
#include "sphcast/params.hpp"
#include "sphcast/random.hpp"
#include "sphcast/sht.hpp"

namespace sphcast {

// ---- spherical convolution ----------------------------------------------
//
// Per channel, a rank-1 spectral filter g(l, m) = a_l * b_m acts on the real
// coefficients. Orders pair up as complex numbers z = c(l, m) + i c(l, -m) and
// are multiplied by a_l * (b_m + i b_-m) for m > 0; m = 0 uses a_l * b_0. This
// keeps the filter equivariant under longitude rotation. a has l_max + 1
// entries, b has 2 l_max + 1 entries stored at l_max + m. The identity filter
// is a = 1, b_m = 1 (m >= 0), b_m = 0 (m < 0).

class SphericalFilterMaps {
 public:
  explicit SphericalFilterMaps(const Sht& sht);
  const Sht& sht() const { return sht_; }
  std::size_t l_max() const { return sht_.l_max(); }

  LinearMapPtr analysis, synthesis;
  LinearMapPtr swap_orders;   // c(l, m) <-> c(l, -m), zero at m = 0
  LinearMapPtr expand_degree; // a_l -> every (l, m)
  LinearMapPtr expand_real;   // b_|m| -> (l, +-m)
  LinearMapPtr expand_imag;   // -+b_-|m| -> (l, +-m)

 private:
  Sht sht_;
};

/// Spectral filtering only: (C, N) coefficients -> (C, N).
ad::Var spherical_filter(const ad::Var& coeffs, const ad::Var& a, const ad::Var& b, const SphericalFilterMaps& maps);
/// synth(g * analysis(x)); x is (C, grid points).
ad::Var spherical_conv(const ad::Var& x, const ad::Var& a, const ad::Var& b, const SphericalFilterMaps& maps);

Tensor identity_degree_filter(std::size_t channels, std::size_t l_max);
Tensor identity_order_filter(std::size_t channels, std::size_t l_max);

// ---- spectral norm --------------------------------------------------------

struct SpectralNormState {
  Tensor u;  // left vector, length rows
  Tensor v;  // right vector, length cols
  double cap = 2.0;
};

SpectralNormState make_spectral_state(std::size_t rows, std::size_t cols, Rng& rng, double cap = 2.0);
/// One power-iteration step on W viewed as (shape[0], rest); returns uᵀWv.
double power_iteration(const Tensor& w, SpectralNormState& state);
/// W * min(1, cap / sigma) with sigma = uᵀWv from the current vectors. A zero
/// matrix (sigma = 0) passes through unchanged.
ad::Var spectral_cap(const ad::Var& w, const SpectralNormState& state);
/// power_iteration followed by spectral_cap.
ad::Var spectral_norm_apply(const ad::Var& w, SpectralNormState& state);

/// Parameter matrix that is optionally spectrally capped. Power-iteration
/// vectors live in the store as buffers `<name>.sn_u` / `<name>.sn_v`.
class Weight {
 public:
  Weight() = default;
  Weight(ParamStore& store, const std::string& name, Tensor init, bool spectral, Rng& rng, double cap = 2.0);
  ad::Var operator()() const;
  const ad::Var& raw() const { return raw_; }
  bool spectral() const { return store_ && spectral_; }

 private:
  ParamStore* store_ = nullptr;
  std::string name_;
  ad::Var raw_;
  bool spectral_ = false;
  double cap_ = 2.0;
};

/// Advances every spectrally capped weight in the store by one power step.
void spectral_power_step(ParamStore& store);

/// Glorot-style uniform init for a (rows, cols) matrix.
Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng, double gain = 1.0);

// ---- latitude-dilated grid convolution -------------------------------------

/// Gathers for a 3x3 kernel with longitudinal dilation. Longitude wraps;
/// rows beyond a pole reflect back with a 180 degree longitude roll.
/// Dilation d is active on rows where 1 / cos(lat) >= activation * d.
class GridConvPlan {
 public:
  GridConvPlan(const Grid& grid, std::vector<std::size_t> dilations = {1, 2, 4}, double activation = 0.75);

  const Grid& grid() const { return grid_; }
  const std::vector<std::size_t>& dilations() const { return dilations_; }
  bool active(std::size_t row, std::size_t d_index) const { return active_[row * dilations_.size() + d_index]; }
  const std::vector<std::size_t>& active_rows(std::size_t d_index) const { return rows_[d_index]; }
  /// Additive mask for the dilation logits: 0 where active, -inf-like otherwise.
  const Tensor& logit_mask() const { return mask_; }

  struct Gather {
    LinearMapPtr im2col;   // grid -> 9 * positions, tap-major
    LinearMapPtr expand;   // per-row weight (n_lat) -> positions
    LinearMapPtr scatter;  // positions -> grid
    std::size_t positions = 0;
  };
  const Gather& optimized(std::size_t d_index) const { return fast_[d_index]; }
  const Gather& naive(std::size_t d_index) const { return naive_[d_index]; }

 private:
  Grid grid_;
  std::vector<std::size_t> dilations_;
  std::vector<char> active_;
  std::vector<std::vector<std::size_t>> rows_;
  Tensor mask_;
  std::vector<Gather> fast_;
  std::vector<Gather> naive_;
};

/// Per-row simplex weights over dilations from unconstrained logits (n_lat, D).
ad::Var dilation_weights(const ad::Var& logits, const GridConvPlan& plan);
/// y(row) = sum_d weight(row, d) conv_d(x)(row). kernel is (C_out, C_in * 9)
/// with taps ordered (dlat, dlon) row-major; weights (n_lat, D) from
/// dilation_weights. The naive path evaluates every dilation on every row.
ad::Var grid_conv(const ad::Var& x, const ad::Var& kernel, const ad::Var& weights, const GridConvPlan& plan,
                  bool naive = false);

// ---- resampling -----------------------------------------------------------

/// 2x2 area-weighted average pooling from `fine` to fine.coarsened().
LinearMapPtr downsample_map(const Grid& fine);
/// Bilinear interpolation from `coarse` to coarse.refined(); longitude wraps,
/// latitude clamps to the outermost rows.
LinearMapPtr upsample_map(const Grid& coarse);

// ---- small layers ---------------------------------------------------------

/// Normalizes each grid point across channels; gamma, beta are (C, 1).
ad::Var layer_norm(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, double eps = 1e-5);
/// W x + b for (C_in, P) inputs; b may be undefined.
ad::Var pointwise_linear(const ad::Var& x, const ad::Var& w, const ad::Var& b);

}  // namespace sphcast
