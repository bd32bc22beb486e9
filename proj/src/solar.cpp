#include "sphcast/solar.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sphcast {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_deg(double x) {
  x = std::fmod(x, 360.0);
  return x < 0.0 ? x + 360.0 : x;
}

}  // namespace

SolarGeometry solar_geometry(std::int64_t unix_seconds, const Grid& grid) {
  // 1900-01-01 .. 2100-01-01
  if (unix_seconds < -2208988800LL || unix_seconds >= 4102444800LL) {
    throw std::out_of_range("timestamp outside the supported 1900-2100 epoch");
  }
  const double days = static_cast<double>(unix_seconds) / 86400.0;
  const double n = days - 10957.5;  // days since J2000.0
  const double mean_lon = wrap_deg(280.460 + 0.9856474 * n);
  const double g = wrap_deg(357.528 + 0.9856003 * n) * kDeg;
  const double lambda = wrap_deg(mean_lon + 1.915 * std::sin(g) + 0.020 * std::sin(2.0 * g));
  const double eps = (23.439 - 0.0000004 * n) * kDeg;
  const double lam = lambda * kDeg;

  SolarGeometry s;
  s.sun_longitude_deg = lambda;
  s.distance_au = 1.00014 - 0.01671 * std::cos(g) - 0.00014 * std::cos(2.0 * g);
  s.declination_rad = std::asin(std::sin(eps) * std::sin(lam));
  const double ra = wrap_deg(std::atan2(std::cos(eps) * std::sin(lam), std::cos(lam)) / kDeg);
  double eot_deg = mean_lon - ra;
  if (eot_deg > 180.0) eot_deg -= 360.0;
  if (eot_deg < -180.0) eot_deg += 360.0;
  s.equation_of_time_min = 4.0 * eot_deg;

  s.hour_angle = Tensor(Shape{1, grid.size()});
  s.cos_zenith = Tensor(Shape{1, grid.size()});
  for (std::size_t j = 0; j < grid.n_lat(); ++j) {
    for (std::size_t k = 0; k < grid.n_lon(); ++k) {
      const SolarPoint p = solar_point(s, unix_seconds, grid.lat_deg(j), grid.lon_deg(k));
      s.hour_angle[j * grid.n_lon() + k] = p.hour_angle;
      s.cos_zenith[j * grid.n_lon() + k] = p.cos_zenith;
    }
  }
  return s;
}

SolarPoint solar_point(const SolarGeometry& s, std::int64_t unix_seconds, double lat_deg, double lon_deg) {
  const double days = static_cast<double>(unix_seconds) / 86400.0;
  const double ut_hours = (days - std::floor(days)) * 24.0;
  double h = (ut_hours - 12.0) * 15.0 + lon_deg + s.equation_of_time_min / 4.0;
  h = std::fmod(h + 180.0, 360.0);
  if (h <= 0.0) h += 360.0;
  h = (h - 180.0) * kDeg;
  const double phi = lat_deg * kDeg;
  return {h, std::sin(phi) * std::sin(s.declination_rad) + std::cos(phi) * std::cos(s.declination_rad) * std::cos(h)};
}

Tensor solar_channels(std::int64_t unix_seconds, const Grid& grid) {
  const SolarGeometry s = solar_geometry(unix_seconds, grid);
  Tensor out(Shape{4, grid.size()});
  for (std::size_t p = 0; p < grid.size(); ++p) {
    out[p] = s.sun_longitude_deg;
    out[grid.size() + p] = s.distance_au;
    out[2 * grid.size() + p] = s.hour_angle[p];
    out[3 * grid.size() + p] = s.cos_zenith[p];
  }
  return out;
}

}  // namespace sphcast
