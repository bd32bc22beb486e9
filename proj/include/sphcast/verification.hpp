#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sphcast/grid.hpp"
#include "sphcast/models.hpp"

namespace sphcast {

/// sqrt of the area-weighted mean squared difference of one field.
double rmse(const Grid& grid, std::span<const double> forecast, std::span<const double> truth);

/// Area-weighted centered anomaly correlation. Empty when either anomaly has
/// zero variance.
std::optional<double> acc(const Grid& grid, std::span<const double> forecast, std::span<const double> truth,
                          std::span<const double> climatology);

enum class Tail { High, Low, Both };
const char* tail_name(Tail t);

struct RqeSpec {
  std::vector<double> quantiles{0.90, 0.95, 0.99, 0.995, 0.999};  // high tail; low tail uses 1 - q
  double max_abs_lat = 60.0;                                         // cells beyond are ignored
};

/// Smallest value whose cumulative weight reaches q of the total (no interpolation).
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

/// Relative quantile error over cells with |lat| <= max_abs_lat, averaged over
/// the quantile set. High tail: (Qf - Qt) / |Qt|; low tail: (Qt - Qf) / |Qt|,
/// so positive always means a more extreme forecast. Quantiles with Qt = 0 are
/// skipped; empty when none remain. Throws on an empty mask.
std::optional<double> rqe(const Grid& grid, std::span<const double> forecast, std::span<const double> truth, Tail tail,
                          const RqeSpec& spec = {});

// ---- derived variables -----------------------------------------------------

/// sqrt(u^2 + v^2); u and v must share a unit.
Tensor wind_speed(const Tensor& u, const Tensor& v, const std::string& unit_u, const std::string& unit_v);
/// p - 1013.25; p must be in hPa.
Tensor mslp_departure(const Tensor& p, const std::string& unit);
Tensor anomaly(const Tensor& x, const Tensor& climatology);

// ---- reports ---------------------------------------------------------------

struct MetricRow {
  std::string variable;
  double lead_hours = 0.0;
  double rmse = 0.0;
  std::optional<double> acc;
  std::optional<double> rqe;
};

struct EvalSpec {
  RqeSpec rqe;
  Tail default_tail = Tail::Both;
  std::map<std::string, Tail> tails{{"10w", Tail::High}, {"tp", Tail::High}};
  Tail tail_for(const std::string& variable) const;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // variable-major, then lead time
  std::size_t initial_conditions = 0;

  const MetricRow& at(const std::string& variable, double lead_hours) const;
  /// `variable,lead_hours,metric,value` lines; undefined values print as "undefined".
  std::string to_text() const;
};

/// Metrics for one initial condition. forecast[k] and truth[k] hold the
/// registry's predicted channels at the same valid time; climatology is
/// (predicted channels, points). Lead hours count from `init_time`.
MetricReport evaluate_run(const std::vector<WeatherState>& forecast, const std::vector<WeatherState>& truth,
                          const Tensor& climatology, const VariableRegistry& reg, const Grid& grid,
                          std::int64_t init_time, const EvalSpec& spec = {});

/// Mean of each metric over reports with identical layouts. An undefined
/// value in any report leaves the mean over the defined ones.
MetricReport average_reports(const std::vector<MetricReport>& reports);

// ---- spectra and images ----------------------------------------------------

/// Energy per spherical-harmonic degree 0..l_max of one field.
std::vector<double> degree_spectrum(const Grid& grid, std::span<const double> field, std::size_t l_max);

/// 8-bit binary PGM of one field, linearly scaled from [lo, hi] (min/max when lo == hi).
void write_pgm(const std::string& path, const Grid& grid, std::span<const double> field, double lo = 0.0,
               double hi = 0.0);

}  // namespace sphcast
