#pragma once

#include <cstddef>
#include <vector>

#include "sphcast/tensor.hpp"

namespace sphcast {

/// Cell-centered equiangular latitude-longitude grid without pole rows.
/// Row j is centered at 90 - (j + 0.5) * 180 / n_lat degrees; column k at
/// k * 360 / n_lon degrees east. Always n_lon = 2 * n_lat.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::size_t n_lat);
  Grid(std::size_t n_lat, std::size_t n_lon);

  std::size_t n_lat() const { return n_lat_; }
  std::size_t n_lon() const { return n_lon_; }
  std::size_t size() const { return n_lat_ * n_lon_; }

  double lat_deg(std::size_t row) const { return lat_[row]; }
  double lon_deg(std::size_t col) const;
  const std::vector<double>& lat_centers() const { return lat_; }

  /// Fractional cell area of one cell in `row`; n_lon * sum over rows is 1.
  double cell_weight(std::size_t row) const { return weights_[row]; }
  const std::vector<double>& row_weights() const { return weights_; }

  /// Grid with half the rows and columns; cells nest exactly.
  Grid coarsened() const;
  Grid refined() const { return Grid(2 * n_lat_); }

  /// Throws ShapeError unless `field` is (channels, n_lat * n_lon).
  void check_field(const Tensor& field, const char* what) const;

  friend bool operator==(const Grid& a, const Grid& b) { return a.n_lat_ == b.n_lat_ && a.n_lon_ == b.n_lon_; }

 private:
  std::size_t n_lat_ = 0;
  std::size_t n_lon_ = 0;
  std::vector<double> lat_;
  std::vector<double> weights_;
};

/// Area-weighted mean of one channel row of a field.
double area_mean(const Grid& grid, std::span<const double> values);

/// Circular shift eastward by `cells` columns: out(j, k + cells) = in(j, k).
Tensor shift_lon(const Grid& grid, const Tensor& field, long cells);

}  // namespace sphcast
