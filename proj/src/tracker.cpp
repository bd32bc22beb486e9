#include "sphcast/tracker.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sphcast {

double great_circle_deg(double lat1, double lon1, double lat2, double lon2) {
  constexpr double r = std::numbers::pi / 180.0;
  const double s1 = std::sin(0.5 * (lat2 - lat1) * r);
  const double s2 = std::sin(0.5 * (lon2 - lon1) * r);
  const double h = s1 * s1 + std::cos(lat1 * r) * std::cos(lat2 * r) * s2 * s2;
  return 2.0 * std::asin(std::min(1.0, std::sqrt(h))) / r;
}

std::size_t grid_point_at(const Grid& grid, double lat, double lon) {
  constexpr double tol = 1e-6;
  for (std::size_t j = 0; j < grid.n_lat(); ++j) {
    if (std::abs(grid.lat_deg(j) - lat) > tol) continue;
    for (std::size_t k = 0; k < grid.n_lon(); ++k) {
      const double d = std::remainder(grid.lon_deg(k) - lon, 360.0);
      if (std::abs(d) <= tol) return j * grid.n_lon() + k;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "initial position (%g, %g) is not a grid point", lat, lon);
  throw std::invalid_argument(buf);
}

Track track(const Grid& grid, const std::vector<PressureField>& fields, double lat0, double lon0, double radius_deg) {
  const double spacing = 180.0 / static_cast<double>(grid.n_lat());
  if (!(radius_deg >= spacing)) {
    throw std::invalid_argument("search radius " + std::to_string(radius_deg) + " deg is below one grid spacing (" +
                                std::to_string(spacing) + " deg)");
  }
  std::size_t center = grid_point_at(grid, lat0, lon0);
  const std::size_t nk = grid.n_lon();
  // Points exactly on the circle count; allow for rounding in the distance.
  const double reach = radius_deg + 1e-9;

  Track out;
  for (std::size_t step = 0; step < fields.size(); ++step) {
    const auto& f = fields[step].hpa;
    if (f.size() != grid.size()) {
      throw ShapeError("track: step " + std::to_string(step) + " has " + std::to_string(f.size()) + " values, grid has " +
                       std::to_string(grid.size()));
    }
    const double clat = grid.lat_deg(center / nk), clon = grid.lon_deg(center % nk);
    std::size_t best = center;
    double best_p = std::numeric_limits<double>::infinity();
    double best_d = best_p;
    // Row-major scan keeps the row/column tie-breaks implicit.
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double d = great_circle_deg(clat, clon, grid.lat_deg(p / nk), grid.lon_deg(p % nk));
      if (d > reach) continue;
      if (!std::isfinite(f[p])) throw std::invalid_argument("track: non-finite pressure at step " + std::to_string(step));
      if (f[p] < best_p || (f[p] == best_p && d < best_d)) {
        best = p;
        best_p = f[p];
        best_d = d;
      }
    }
    if (best_p > kTrackStopHpa) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "pressure %.2f hPa above %.0f hPa at step %zu", best_p, kTrackStopHpa, step);
      out.terminated = true;
      out.reason = buf;
      if (!out.points.empty()) {
        out.points.back().terminated = true;
        out.points.back().reason = buf;
      }
      return out;
    }
    center = best;
    TrackPoint tp;
    tp.time = fields[step].time;
    tp.row = center / nk;
    tp.col = center % nk;
    tp.lat = grid.lat_deg(tp.row);
    tp.lon = grid.lon_deg(tp.col);
    tp.pressure = best_p;
    out.points.push_back(tp);
  }
  out.reason = "end of sequence";
  return out;
}

std::string format_track(const Track& t) {
  std::string s;
  char buf[128];
  for (const auto& p : t.points) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.4f\n", static_cast<long long>(p.time), p.lat, p.lon, p.pressure);
    s += buf;
  }
  return s;
}

}  // namespace sphcast
