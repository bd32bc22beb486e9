#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "sphcast/grid.hpp"
#include "sphcast/linear_map.hpp"
#include "sphcast/tensor.hpp"

namespace sphcast {

/// Real orthonormal spherical-harmonic transform with triangular truncation.
///
/// Basis: Y_lm = pbar_l|m|(sin lat) / sqrt(2 pi) * {1, sqrt2 cos(m lon), sqrt2 sin(|m| lon)}
/// for m = 0, m > 0, m < 0, so that the integral of Y_lm^2 over the sphere is 1.
/// Coefficient (l, m) is stored at l*l + l + m.
///
/// Analysis is an exact longitudinal DFT followed, per order m, by a weighted
/// least-squares fit in latitude using Fejer quadrature weights. When
/// 2 * l_max < n_lat the fit reduces to plain quadrature; in all cases
/// analysis(synthesis(c)) == c for l_max < n_lat.
///
/// Instances are immutable and cheap to copy.
class Sht {
 public:
  Sht(const Grid& grid, std::size_t l_max);
  explicit Sht(const Grid& grid) : Sht(grid, default_l_max(grid)) {}

  static std::size_t default_l_max(const Grid& grid) { return 2 * grid.n_lat() / 3; }
  static std::size_t coeff_count(std::size_t l_max) { return (l_max + 1) * (l_max + 1); }
  static std::size_t index(std::size_t l, long m) { return l * l + l + static_cast<std::size_t>(static_cast<long>(m)); }

  const Grid& grid() const;
  std::size_t l_max() const;
  std::size_t n_coeffs() const { return coeff_count(l_max()); }

  /// (channels, grid points) -> (channels, coefficients).
  Tensor analysis(const Tensor& field) const;
  /// (channels, coefficients) -> (channels, grid points).
  Tensor synthesis(const Tensor& coeffs) const;

  void analyze(std::span<const double> field, std::span<double> coeffs) const;
  void synthesize(std::span<const double> coeffs, std::span<double> field) const;
  void analyze_adjoint(std::span<const double> coeffs, std::span<double> field) const;
  void synthesize_adjoint(std::span<const double> field, std::span<double> coeffs) const;

  /// Latitude quadrature weights (integral over sin(lat) in [-1, 1]); sum to 2.
  const std::vector<double>& quadrature_weights() const;

  /// Power per degree: E_l = sum_m c_lm^2, for one channel of coefficients.
  std::vector<double> degree_power(std::span<const double> coeffs) const;

  LinearMapPtr analysis_map() const;
  LinearMapPtr synthesis_map() const;

  struct Impl;

 private:
  std::shared_ptr<const Impl> impl_;
};

/// Driscoll-Healy style weights for cell-centered latitudes (Fejer's first rule).
std::vector<double> fejer_weights(std::size_t n_lat);

}  // namespace sphcast
