#include "sphcast/sht.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

namespace sphcast {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fully normalized associated Legendre functions, integral of pbar^2 over
// [-1, 1] equal to 1, without the Condon-Shortley phase. Result indexed
// [m][l - m].
std::vector<std::vector<double>> legendre_table(std::size_t l_max, double x, double s) {
  std::vector<std::vector<double>> p(l_max + 1);
  double pmm = 1.0 / std::numbers::sqrt2;
  for (std::size_t m = 0; m <= l_max; ++m) {
    if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
    auto& col = p[m];
    col.resize(l_max - m + 1);
    col[0] = pmm;
    if (m + 1 <= l_max) col[1] = std::sqrt(2.0 * m + 3.0) * x * pmm;
    for (std::size_t l = m + 2; l <= l_max; ++l) {
      const double ld = static_cast<double>(l);
      const double md = static_cast<double>(m);
      const double a = std::sqrt((4.0 * ld * ld - 1.0) / (ld * ld - md * md));
      const double b = std::sqrt(((ld - 1.0) * (ld - 1.0) - md * md) / (4.0 * (ld - 1.0) * (ld - 1.0) - 1.0));
      col[l - m] = a * (x * col[l - m - 1] - b * col[l - m - 2]);
    }
  }
  return p;
}

}  // namespace

std::vector<double> fejer_weights(std::size_t n_lat) {
  std::vector<double> w(n_lat);
  const double n = static_cast<double>(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double theta = (static_cast<double>(j) + 0.5) * std::numbers::pi / n;
    double acc = 0.0;
    for (std::size_t k = 1; k <= n_lat / 2; ++k) {
      const double kd = static_cast<double>(k);
      acc += std::cos(2.0 * kd * theta) / (4.0 * kd * kd - 1.0);
    }
    w[j] = 2.0 / n * (1.0 - 2.0 * acc);
  }
  return w;
}

struct Sht::Impl {
  Grid grid;
  std::size_t l_max = 0;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<double> weights;
  // Longitudinal basis rows including the sqrt2 factor: [m][k].
  std::vector<double> tc;
  std::vector<double> ts;
  // Per order m: synthesis P_m (n_lat x n_l) and analysis A_m (n_l x n_lat).
  std::vector<std::vector<double>> synth;
  std::vector<std::vector<double>> anal;

  std::size_t n_l(std::size_t m) const { return l_max - m + 1; }

  // u[m][j] = sum_k f[j,k] T_m[k] for both cos and sin parts.
  void lon_project(std::span<const double> f, std::vector<double>& uc, std::vector<double>& us, double factor) const {
    uc.assign((l_max + 1) * n_lat, 0.0);
    us.assign((l_max + 1) * n_lat, 0.0);
    for (std::size_t j = 0; j < n_lat; ++j) {
      const double* row = f.data() + j * n_lon;
      for (std::size_t m = 0; m <= l_max; ++m) {
        const double* c = tc.data() + m * n_lon;
        const double* s = ts.data() + m * n_lon;
        double ac = 0.0;
        double as = 0.0;
        for (std::size_t k = 0; k < n_lon; ++k) {
          ac += row[k] * c[k];
          as += row[k] * s[k];
        }
        uc[m * n_lat + j] = factor * ac;
        us[m * n_lat + j] = factor * as;
      }
    }
  }

  void lon_expand(const std::vector<double>& vc, const std::vector<double>& vs, std::span<double> f,
                  double factor) const {
    for (std::size_t j = 0; j < n_lat; ++j) {
      double* row = f.data() + j * n_lon;
      for (std::size_t k = 0; k < n_lon; ++k) row[k] = 0.0;
      for (std::size_t m = 0; m <= l_max; ++m) {
        const double a = factor * vc[m * n_lat + j];
        const double b = factor * vs[m * n_lat + j];
        const double* c = tc.data() + m * n_lon;
        const double* s = ts.data() + m * n_lon;
        for (std::size_t k = 0; k < n_lon; ++k) row[k] += a * c[k] + b * s[k];
      }
    }
  }

  // coeffs <- M_m applied to u (M is n_l x n_lat).
  void lat_forward(const std::vector<std::vector<double>>& mats, const std::vector<double>& uc,
                   const std::vector<double>& us, std::span<double> coeffs) const {
    for (std::size_t m = 0; m <= l_max; ++m) {
      const auto& mat = mats[m];
      const std::size_t nl = n_l(m);
      for (std::size_t i = 0; i < nl; ++i) {
        const double* r = mat.data() + i * n_lat;
        double ac = 0.0;
        double as = 0.0;
        for (std::size_t j = 0; j < n_lat; ++j) {
          ac += r[j] * uc[m * n_lat + j];
          as += r[j] * us[m * n_lat + j];
        }
        const std::size_t l = m + i;
        coeffs[index(l, static_cast<long>(m))] = ac;
        if (m > 0) coeffs[index(l, -static_cast<long>(m))] = as;
      }
    }
  }

  // v <- M_m^T-style product: v[m][j] = sum_i mat(j, i) c(m + i, +-m), mat given row-major
  // with `stride_j`/`stride_i`.
  void lat_backward(const std::vector<std::vector<double>>& mats, bool transposed, std::span<const double> coeffs,
                    std::vector<double>& vc, std::vector<double>& vs) const {
    vc.assign((l_max + 1) * n_lat, 0.0);
    vs.assign((l_max + 1) * n_lat, 0.0);
    for (std::size_t m = 0; m <= l_max; ++m) {
      const auto& mat = mats[m];
      const std::size_t nl = n_l(m);
      for (std::size_t i = 0; i < nl; ++i) {
        const std::size_t l = m + i;
        const double cc = coeffs[index(l, static_cast<long>(m))];
        const double cs = m > 0 ? coeffs[index(l, -static_cast<long>(m))] : 0.0;
        for (std::size_t j = 0; j < n_lat; ++j) {
          const double e = transposed ? mat[i * n_lat + j] : mat[j * nl + i];
          vc[m * n_lat + j] += e * cc;
          vs[m * n_lat + j] += e * cs;
        }
      }
    }
  }
};

namespace {

class ShtMap final : public LinearMap {
 public:
  enum class Kind { Analysis, Synthesis, AnalysisAdjoint, SynthesisAdjoint };
  ShtMap(Sht sht, Kind kind) : sht_(std::move(sht)), kind_(kind) {}

  std::size_t in_size() const override {
    return (kind_ == Kind::Analysis || kind_ == Kind::SynthesisAdjoint) ? sht_.grid().size() : sht_.n_coeffs();
  }
  std::size_t out_size() const override {
    return (kind_ == Kind::Analysis || kind_ == Kind::SynthesisAdjoint) ? sht_.n_coeffs() : sht_.grid().size();
  }
  void apply(std::span<const double> in, std::span<double> out) const override {
    switch (kind_) {
      case Kind::Analysis: sht_.analyze(in, out); break;
      case Kind::Synthesis: sht_.synthesize(in, out); break;
      case Kind::AnalysisAdjoint: sht_.analyze_adjoint(in, out); break;
      case Kind::SynthesisAdjoint: sht_.synthesize_adjoint(in, out); break;
    }
  }
  LinearMapPtr adjoint() const override {
    Kind adj = Kind::Analysis;
    switch (kind_) {
      case Kind::Analysis: adj = Kind::AnalysisAdjoint; break;
      case Kind::Synthesis: adj = Kind::SynthesisAdjoint; break;
      case Kind::AnalysisAdjoint: adj = Kind::Analysis; break;
      case Kind::SynthesisAdjoint: adj = Kind::Synthesis; break;
    }
    return std::make_shared<const ShtMap>(sht_, adj);
  }

 private:
  Sht sht_;
  Kind kind_;
};

}  // namespace

Sht::Sht(const Grid& grid, std::size_t l_max) {
  if (l_max > default_l_max(grid)) {
    throw std::invalid_argument("l_max " + std::to_string(l_max) + " exceeds the anti-aliasing bound " +
                                std::to_string(default_l_max(grid)) + " for " + std::to_string(grid.n_lat()) +
                                " latitude rows");
  }
  auto impl = std::make_shared<Impl>();
  impl->grid = grid;
  impl->l_max = l_max;
  impl->n_lat = grid.n_lat();
  impl->n_lon = grid.n_lon();
  impl->weights = fejer_weights(grid.n_lat());

  const std::size_t n_lat = impl->n_lat;
  const std::size_t n_lon = impl->n_lon;
  impl->tc.assign((l_max + 1) * n_lon, 0.0);
  impl->ts.assign((l_max + 1) * n_lon, 0.0);
  for (std::size_t m = 0; m <= l_max; ++m) {
    const double fac = m == 0 ? 1.0 : std::numbers::sqrt2;
    for (std::size_t k = 0; k < n_lon; ++k) {
      const double ang = kTwoPi * static_cast<double>((m * k) % n_lon) / static_cast<double>(n_lon);
      impl->tc[m * n_lon + k] = fac * std::cos(ang);
      impl->ts[m * n_lon + k] = m == 0 ? 0.0 : fac * std::sin(ang);
    }
  }

  std::vector<std::vector<std::vector<double>>> leg(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double theta = (static_cast<double>(j) + 0.5) * std::numbers::pi / static_cast<double>(n_lat);
    leg[j] = legendre_table(l_max, std::cos(theta), std::sin(theta));
  }
  const double inv_root = 1.0 / std::sqrt(kTwoPi);
  impl->synth.resize(l_max + 1);
  impl->anal.resize(l_max + 1);
  for (std::size_t m = 0; m <= l_max; ++m) {
    const std::size_t nl = impl->n_l(m);
    Eigen::MatrixXd p(n_lat, nl);
    for (std::size_t j = 0; j < n_lat; ++j) {
      for (std::size_t i = 0; i < nl; ++i) p(j, i) = leg[j][m][i] * inv_root;
    }
    // Weighted least squares: (2 pi P^T W P) c = P^T W u.
    Eigen::MatrixXd ptw = p.transpose();
    for (std::size_t j = 0; j < n_lat; ++j) ptw.col(j) *= impl->weights[j];
    const Eigen::MatrixXd normal = kTwoPi * ptw * p;
    const Eigen::MatrixXd a = normal.ldlt().solve(ptw);

    auto& s = impl->synth[m];
    s.resize(n_lat * nl);
    for (std::size_t j = 0; j < n_lat; ++j) {
      for (std::size_t i = 0; i < nl; ++i) s[j * nl + i] = p(j, i);
    }
    auto& an = impl->anal[m];
    an.resize(nl * n_lat);
    for (std::size_t i = 0; i < nl; ++i) {
      for (std::size_t j = 0; j < n_lat; ++j) an[i * n_lat + j] = a(i, j);
    }
  }
  impl_ = std::move(impl);
}

const Grid& Sht::grid() const { return impl_->grid; }
std::size_t Sht::l_max() const { return impl_->l_max; }
const std::vector<double>& Sht::quadrature_weights() const { return impl_->weights; }

void Sht::analyze(std::span<const double> field, std::span<double> coeffs) const {
  std::vector<double> uc;
  std::vector<double> us;
  impl_->lon_project(field, uc, us, kTwoPi / static_cast<double>(impl_->n_lon));
  impl_->lat_forward(impl_->anal, uc, us, coeffs);
}

void Sht::synthesize(std::span<const double> coeffs, std::span<double> field) const {
  std::vector<double> vc;
  std::vector<double> vs;
  impl_->lat_backward(impl_->synth, false, coeffs, vc, vs);
  impl_->lon_expand(vc, vs, field, 1.0);
}

void Sht::analyze_adjoint(std::span<const double> coeffs, std::span<double> field) const {
  std::vector<double> vc;
  std::vector<double> vs;
  impl_->lat_backward(impl_->anal, true, coeffs, vc, vs);
  impl_->lon_expand(vc, vs, field, kTwoPi / static_cast<double>(impl_->n_lon));
}

void Sht::synthesize_adjoint(std::span<const double> field, std::span<double> coeffs) const {
  std::vector<double> uc;
  std::vector<double> us;
  impl_->lon_project(field, uc, us, 1.0);
  // c(m + i) = sum_j P_m(j, i) u(j): the synthesis matrix used transposed.
  for (std::size_t m = 0; m <= impl_->l_max; ++m) {
    const auto& p = impl_->synth[m];
    const std::size_t nl = impl_->n_l(m);
    for (std::size_t i = 0; i < nl; ++i) {
      double ac = 0.0;
      double as = 0.0;
      for (std::size_t j = 0; j < impl_->n_lat; ++j) {
        ac += p[j * nl + i] * uc[m * impl_->n_lat + j];
        as += p[j * nl + i] * us[m * impl_->n_lat + j];
      }
      coeffs[index(m + i, static_cast<long>(m))] = ac;
      if (m > 0) coeffs[index(m + i, -static_cast<long>(m))] = as;
    }
  }
}

Tensor Sht::analysis(const Tensor& field) const {
  grid().check_field(field, "sht analysis");
  Tensor out(Shape{field.shape[0], n_coeffs()});
  for (std::size_t c = 0; c < field.shape[0]; ++c) analyze(field.row(c), out.row(c));
  return out;
}

Tensor Sht::synthesis(const Tensor& coeffs) const {
  if (coeffs.rank() != 2 || coeffs.shape[1] != n_coeffs()) {
    throw ShapeError("sht synthesis: coefficient shape " + shape_str(coeffs.shape) + " does not match l_max " +
                     std::to_string(l_max()));
  }
  Tensor out(Shape{coeffs.shape[0], grid().size()});
  for (std::size_t c = 0; c < coeffs.shape[0]; ++c) synthesize(coeffs.row(c), out.row(c));
  return out;
}

std::vector<double> Sht::degree_power(std::span<const double> coeffs) const {
  std::vector<double> e(l_max() + 1, 0.0);
  for (std::size_t l = 0; l <= l_max(); ++l) {
    for (long m = -static_cast<long>(l); m <= static_cast<long>(l); ++m) {
      const double c = coeffs[index(l, m)];
      e[l] += c * c;
    }
  }
  return e;
}

LinearMapPtr Sht::analysis_map() const { return std::make_shared<const ShtMap>(*this, ShtMap::Kind::Analysis); }
LinearMapPtr Sht::synthesis_map() const { return std::make_shared<const ShtMap>(*this, ShtMap::Kind::Synthesis); }

}  // namespace sphcast
