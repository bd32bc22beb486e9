#pragma once

#include <cstdint>

#include "sphcast/grid.hpp"
#include "sphcast/tensor.hpp"

namespace sphcast {

struct SolarGeometry {
  double sun_longitude_deg = 0.0;  // apparent ecliptic longitude
  double distance_au = 1.0;
  double declination_rad = 0.0;
  double equation_of_time_min = 0.0;
  Tensor hour_angle;   // (1, points), radians in (-pi, pi]
  Tensor cos_zenith;   // (1, points)
};

/// Low-precision almanac formulas, timestamps in Unix seconds (UTC).
/// Supported between 1900 and 2100.
SolarGeometry solar_geometry(std::int64_t unix_seconds, const Grid& grid);

struct SolarPoint {
  double hour_angle = 0.0;  // radians in (-pi, pi]
  double cos_zenith = 0.0;
};
SolarPoint solar_point(const SolarGeometry& s, std::int64_t unix_seconds, double lat_deg, double lon_deg);

/// The four temporal auxiliary channels in registry order
/// (sun_lon, sun_dist, hour_angle, cos_zenith), physical units, (4, points).
Tensor solar_channels(std::int64_t unix_seconds, const Grid& grid);

}  // namespace sphcast
