#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphcast/grid.hpp"

namespace sphcast {

/// Storms stop being tracked once the central pressure rises past this.
inline constexpr double kTrackStopHpa = 998.0;
inline constexpr double kDefaultSearchRadiusDeg = 4.5;

struct PressureField {
  std::int64_t time = 0;
  std::vector<double> hpa;  // one value per grid point
};

struct TrackPoint {
  std::int64_t time = 0;
  std::size_t row = 0, col = 0;
  double lat = 0.0, lon = 0.0;
  double pressure = 0.0;    // hPa
  bool terminated = false;  // set on the last point of a stopped track
  std::string reason;
};

struct Track {
  std::vector<TrackPoint> points;
  bool terminated = false;  // stopped by the pressure threshold
  std::string reason;       // "pressure above 998 hPa at step k" or "end of sequence"
};

/// Great-circle distance in degrees of arc.
double great_circle_deg(double lat1, double lon1, double lat2, double lon2);

/// Grid point whose center is (lat, lon) to within 1e-6 degrees; throws
/// std::invalid_argument otherwise.
std::size_t grid_point_at(const Grid& grid, double lat, double lon);

/// Follows a low through `fields`. At every step (including the first) the
/// center moves to the grid point of minimum pressure within `radius_deg` of
/// the previous center; ties go to the point nearest the previous center, then
/// the lowest row, then the lowest column. The track ends before the first
/// step whose minimum exceeds 998 hPa. The radius must be at least one grid
/// spacing.
Track track(const Grid& grid, const std::vector<PressureField>& fields, double lat0, double lon0,
            double radius_deg = kDefaultSearchRadiusDeg);

/// `time,lat,lon,pressure_hPa` lines.
std::string format_track(const Track& t);

}  // namespace sphcast
