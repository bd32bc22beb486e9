#include "sphcast/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "sphcast/sht.hpp"

namespace sphcast {

namespace {

void require_size(const Grid& grid, std::span<const double> f, const char* what) {
  if (f.size() != grid.size()) {
    throw ShapeError(std::string(what) + ": field has " + std::to_string(f.size()) + " values, grid has " +
                     std::to_string(grid.size()));
  }
}

double row_weight(const Grid& grid, std::size_t p) { return grid.cell_weight(p / grid.n_lon()); }

}  // namespace

double rmse(const Grid& grid, std::span<const double> forecast, std::span<const double> truth) {
  require_size(grid, forecast, "rmse forecast");
  require_size(grid, truth, "rmse truth");
  double acc = 0.0;
  double wsum = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double d = forecast[p] - truth[p];
    acc += row_weight(grid, p) * d * d;
    wsum += row_weight(grid, p);
  }
  return std::sqrt(acc / wsum);
}

std::optional<double> acc(const Grid& grid, std::span<const double> forecast, std::span<const double> truth,
                          std::span<const double> climatology) {
  require_size(grid, forecast, "acc forecast");
  require_size(grid, truth, "acc truth");
  require_size(grid, climatology, "acc climatology");
  double fa = 0.0, ff = 0.0, aa = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double w = row_weight(grid, p);
    const double f = forecast[p] - climatology[p];
    const double a = truth[p] - climatology[p];
    fa += w * f * a;
    ff += w * f * f;
    aa += w * a * a;
  }
  if (ff == 0.0 || aa == 0.0) return std::nullopt;
  return std::clamp(fa / std::sqrt(ff * aa), -1.0, 1.0);
}

const char* tail_name(Tail t) {
  switch (t) {
    case Tail::High: return "high";
    case Tail::Low: return "low";
    case Tail::Both: return "both";
  }
  return "?";
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (values.size() != weights.size()) throw ShapeError("quantile: values and weights differ in length");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = q * total;
  double cum = 0.0;
  for (std::size_t i : order) {
    cum += weights[i];
    if (cum >= target) return values[i];
  }
  return values[order.back()];
}

std::optional<double> rqe(const Grid& grid, std::span<const double> forecast, std::span<const double> truth, Tail tail,
                          const RqeSpec& spec) {
  require_size(grid, forecast, "rqe forecast");
  require_size(grid, truth, "rqe truth");
  std::vector<double> f, t, w;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (std::abs(grid.lat_deg(p / grid.n_lon())) > spec.max_abs_lat) continue;
    f.push_back(forecast[p]);
    t.push_back(truth[p]);
    w.push_back(row_weight(grid, p));
  }
  if (f.empty()) throw std::invalid_argument("rqe: latitude mask leaves no cells");

  auto score = [&](bool high) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (double q : spec.quantiles) {
      const double level = high ? q : 1.0 - q;
      const double qt = weighted_quantile(t, w, level);
      const double qf = weighted_quantile(f, w, level);
      if (qt == 0.0) continue;
      sum += (high ? qf - qt : qt - qf) / std::abs(qt);
      ++n;
    }
    if (!n) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  if (tail == Tail::High) return score(true);
  if (tail == Tail::Low) return score(false);
  const auto hi = score(true);
  const auto lo = score(false);
  if (hi && lo) return 0.5 * (*hi + *lo);
  return hi ? hi : lo;
}

Tensor wind_speed(const Tensor& u, const Tensor& v, const std::string& unit_u, const std::string& unit_v) {
  if (unit_u != unit_v) throw std::invalid_argument("wind components in different units: " + unit_u + ", " + unit_v);
  if (u.shape != v.shape) throw ShapeError("wind components differ in shape");
  Tensor out(u.shape);
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::hypot(u[i], v[i]);
  return out;
}

Tensor mslp_departure(const Tensor& p, const std::string& unit) {
  if (unit != "hPa") throw std::invalid_argument("pressure must be in hPa, got " + unit);
  Tensor out = p;
  for (auto& x : out.data) x -= 1013.25;
  return out;
}

Tensor anomaly(const Tensor& x, const Tensor& climatology) {
  if (x.shape != climatology.shape) throw ShapeError("anomaly: field and climatology differ in shape");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= climatology[i];
  return out;
}

Tail EvalSpec::tail_for(const std::string& variable) const {
  const auto it = tails.find(variable);
  return it == tails.end() ? default_tail : it->second;
}

const MetricRow& MetricReport::at(const std::string& variable, double lead_hours) const {
  for (const auto& r : rows)
    if (r.variable == variable && r.lead_hours == lead_hours) return r;
  throw std::out_of_range("no metrics for " + variable + " at " + std::to_string(lead_hours) + " h");
}

std::string MetricReport::to_text() const {
  std::string out;
  char buf[96];
  auto line = [&](const MetricRow& r, const char* metric, std::optional<double> v) {
    if (v) {
      std::snprintf(buf, sizeof buf, "%.12g", *v);
    } else {
      std::snprintf(buf, sizeof buf, "undefined");
    }
    char lead[32];
    std::snprintf(lead, sizeof lead, "%g", r.lead_hours);
    out += r.variable + "," + lead + "," + metric + "," + buf + "\n";
  };
  for (const auto& r : rows) {
    line(r, "rmse", r.rmse);
    line(r, "acc", r.acc);
    line(r, "rqe", r.rqe);
  }
  return out;
}

MetricReport evaluate_run(const std::vector<WeatherState>& forecast, const std::vector<WeatherState>& truth,
                          const Tensor& climatology, const VariableRegistry& reg, const Grid& grid,
                          std::int64_t init_time, const EvalSpec& spec) {
  if (forecast.size() != truth.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(forecast.size()) + " forecast steps vs " +
                                std::to_string(truth.size()) + " truth steps");
  }
  const std::size_t nv = reg.n_predicted();
  const std::size_t P = grid.size();
  const Shape want{nv, P};
  if (climatology.shape != want) throw ShapeError("evaluate: climatology shape " + shape_str(climatology.shape));
  for (std::size_t k = 0; k < forecast.size(); ++k) {
    if (forecast[k].time != truth[k].time) {
      throw std::invalid_argument("evaluate: step " + std::to_string(k + 1) + " valid times differ");
    }
    if (forecast[k].fields.shape != want || truth[k].fields.shape != want) {
      throw ShapeError("evaluate: step " + std::to_string(k + 1) + " fields do not match the registry");
    }
  }
  MetricReport rep;
  rep.initial_conditions = 1;
  for (std::size_t v = 0; v < nv; ++v) {
    const std::span<const double> clim = climatology.row(v);
    for (std::size_t k = 0; k < forecast.size(); ++k) {
      const auto f = forecast[k].fields.row(v);
      const auto t = truth[k].fields.row(v);
      MetricRow r;
      r.variable = reg[v].name;
      r.lead_hours = static_cast<double>(forecast[k].time - init_time) / 3600.0;
      r.rmse = rmse(grid, f, t);
      r.acc = acc(grid, f, t, clim);
      r.rqe = rqe(grid, f, t, spec.tail_for(r.variable), spec.rqe);
      rep.rows.push_back(std::move(r));
    }
  }
  return rep;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to average");
  MetricReport out = reports[0];
  out.initial_conditions = 0;
  for (const auto& r : reports) {
    if (r.rows.size() != out.rows.size()) throw std::invalid_argument("reports differ in layout");
    out.initial_conditions += r.initial_conditions;
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    double rm = 0.0, ac = 0.0, rq = 0.0;
    std::size_t nac = 0, nrq = 0;
    for (const auto& r : reports) {
      const MetricRow& row = r.rows[i];
      if (row.variable != out.rows[i].variable || row.lead_hours != out.rows[i].lead_hours) {
        throw std::invalid_argument("reports differ in layout");
      }
      rm += row.rmse;
      if (row.acc) ac += *row.acc, ++nac;
      if (row.rqe) rq += *row.rqe, ++nrq;
    }
    out.rows[i].rmse = rm / static_cast<double>(reports.size());
    out.rows[i].acc = nac ? std::optional<double>(ac / static_cast<double>(nac)) : std::nullopt;
    out.rows[i].rqe = nrq ? std::optional<double>(rq / static_cast<double>(nrq)) : std::nullopt;
  }
  return out;
}

std::vector<double> degree_spectrum(const Grid& grid, std::span<const double> field, std::size_t l_max) {
  require_size(grid, field, "spectrum");
  // Transforms are costly to set up; keep one per (grid, l_max).
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, Sht> cache;
  const Sht* sht = nullptr;
  {
    std::lock_guard lock(mu);
    auto it = cache.find({grid.n_lat(), l_max});
    if (it == cache.end()) it = cache.emplace(std::make_pair(grid.n_lat(), l_max), Sht(grid, l_max)).first;
    sht = &it->second;
  }
  std::vector<double> coeffs(sht->n_coeffs());
  sht->analyze(field, coeffs);
  return sht->degree_power(coeffs);
}

void write_pgm(const std::string& path, const Grid& grid, std::span<const double> field, double lo, double hi) {
  require_size(grid, field, "pgm");
  if (lo == hi) {
    const auto [mn, mx] = std::minmax_element(field.begin(), field.end());
    lo = *mn;
    hi = *mx;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << grid.n_lon() << " " << grid.n_lat() << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : field) {
    const double s = std::clamp((v - lo) / span, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(s * 255.0))));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace sphcast
