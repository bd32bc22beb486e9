#include "sphcast/grid.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sphcast {

Grid::Grid(std::size_t n_lat) : Grid(n_lat, 2 * n_lat) {}

Grid::Grid(std::size_t n_lat, std::size_t n_lon) : n_lat_(n_lat), n_lon_(n_lon) {
  if (n_lat == 0) throw ShapeError("grid needs at least one latitude row");
  if (n_lon != 2 * n_lat) {
    throw ShapeError("grid must have n_lon = 2 * n_lat, got " + std::to_string(n_lat) + "x" + std::to_string(n_lon));
  }
  const double dlat = 180.0 / static_cast<double>(n_lat);
  lat_.resize(n_lat);
  weights_.resize(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) lat_[j] = 90.0 - (static_cast<double>(j) + 0.5) * dlat;

  // Exact band areas, computed on the northern half and mirrored.
  const double deg = std::numbers::pi / 180.0;
  for (std::size_t j = 0; j < (n_lat + 1) / 2; ++j) {
    const double top = 90.0 - static_cast<double>(j) * dlat;
    const double bottom = 90.0 - static_cast<double>(j + 1) * dlat;
    const double band = std::sin(top * deg) - std::sin(bottom * deg);
    weights_[j] = band;
    weights_[n_lat - 1 - j] = band;
  }
  double total = 0.0;
  for (double w : weights_) total += w * static_cast<double>(n_lon);
  for (double& w : weights_) w /= total;
}

double Grid::lon_deg(std::size_t col) const { return static_cast<double>(col) * 360.0 / static_cast<double>(n_lon_); }

Grid Grid::coarsened() const {
  if (n_lat_ % 2) throw ShapeError("cannot coarsen a grid with odd row count " + std::to_string(n_lat_));
  return Grid(n_lat_ / 2);
}

void Grid::check_field(const Tensor& field, const char* what) const {
  if (field.rank() != 2 || field.shape[1] != size()) {
    throw ShapeError(std::string(what) + ": field shape " + shape_str(field.shape) + " does not match grid " +
                     std::to_string(n_lat_) + "x" + std::to_string(n_lon_));
  }
}

double area_mean(const Grid& grid, std::span<const double> values) {
  double acc = 0.0;
  for (std::size_t j = 0; j < grid.n_lat(); ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < grid.n_lon(); ++k) row += values[j * grid.n_lon() + k];
    acc += grid.cell_weight(j) * row;
  }
  return acc;
}

Tensor shift_lon(const Grid& grid, const Tensor& field, long cells) {
  grid.check_field(field, "shift_lon");
  const auto n = static_cast<long>(grid.n_lon());
  const long s = ((cells % n) + n) % n;
  Tensor out(field.shape);
  const std::size_t rows = field.shape[0] * grid.n_lat();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = field.data.data() + r * grid.n_lon();
    double* o = out.data.data() + r * grid.n_lon();
    for (long k = 0; k < n; ++k) o[(k + s) % n] = in[k];
  }
  return out;
}

}  // namespace sphcast
