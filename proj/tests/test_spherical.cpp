#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sphcast/grid.hpp"
#include "sphcast/haar.hpp"
#include "sphcast/sht.hpp"

using namespace sphcast;

namespace {

Tensor random_coeffs(std::size_t channels, std::size_t l_max, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor c(Shape{channels, Sht::coeff_count(l_max)});
  for (auto& v : c.data) v = n(rng);
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("grid geometry and area weights") {
  const Grid g(32);
  CHECK(g.n_lon() == 64);
  CHECK(g.lat_deg(0) == doctest::Approx(90.0 - 0.5 * 180.0 / 32));
  double total = 0.0;
  for (std::size_t j = 0; j < g.n_lat(); ++j) {
    CHECK(g.cell_weight(j) > 0.0);
    CHECK(g.cell_weight(j) == g.cell_weight(g.n_lat() - 1 - j));
    total += g.cell_weight(j) * static_cast<double>(g.n_lon());
  }
  CHECK(std::abs(total - 1.0) < 1e-15);
  Tensor ones(Shape{1, g.size()}, 1.0);
  CHECK(std::abs(area_mean(g, ones.row(0)) - 1.0) < 1e-14);

  // Coarse cell weight equals the sum of its four children.
  const Grid c = g.coarsened();
  for (std::size_t j = 0; j < c.n_lat(); ++j) {
    CHECK(std::abs(c.cell_weight(j) - 2.0 * (g.cell_weight(2 * j) + g.cell_weight(2 * j + 1))) < 1e-15);
  }
  CHECK_THROWS_AS(Grid(4, 6), ShapeError);
  CHECK_THROWS_AS(Grid(3).coarsened(), ShapeError);
}

TEST_CASE("fejer weights integrate polynomials in sin(lat)") {
  const auto w = fejer_weights(16);
  const Grid g(16);
  for (int p = 0; p < 16; ++p) {
    double q = 0.0;
    for (std::size_t j = 0; j < 16; ++j) q += w[j] * std::pow(std::sin(g.lat_deg(j) * std::numbers::pi / 180.0), p);
    const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
    CHECK(std::abs(q - exact) < 1e-13);
  }
}

TEST_CASE("analysis of constant and zero fields") {
  const Grid g(32);
  const Sht sht(g);
  CHECK(sht.l_max() == 21);
  const Tensor c = sht.analysis(Tensor(Shape{1, g.size()}, 1.0));
  CHECK(std::abs(c[0] - std::sqrt(4.0 * std::numbers::pi)) < 1e-12);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(c[i]) < 1e-10);

  const Tensor z = sht.analysis(Tensor(Shape{2, g.size()}, 0.0));
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("synthesis of the mean coefficient and zero coefficients") {
  const Grid g(32);
  const Sht sht(g);
  Tensor c(Shape{1, sht.n_coeffs()});
  c[0] = std::sqrt(4.0 * std::numbers::pi);
  const Tensor f = sht.synthesis(c);
  for (double v : f.data) CHECK(std::abs(v - 1.0) < 1e-12);
  const Tensor z = sht.synthesis(Tensor(Shape{1, sht.n_coeffs()}));
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("round trip recovers band-limited coefficients") {
  std::mt19937_64 rng(1);
  const Grid g(64);
  const Sht sht(g, 21);
  const Tensor c = random_coeffs(3, 21, rng);
  const Tensor f = sht.synthesis(c);
  const Tensor back = sht.analysis(f);
  CHECK(max_abs_diff(back, c) < 1e-10);
  CHECK(max_abs_diff(sht.synthesis(back), f) < 1e-10);

  // At the default truncation plain quadrature would alias; the fit does not.
  const Sht full(g);
  const Tensor c2 = random_coeffs(1, full.l_max(), rng);
  CHECK(max_abs_diff(full.analysis(full.synthesis(c2)), c2) < 1e-10);
}

TEST_CASE("parseval against the quadrature integral") {
  std::mt19937_64 rng(2);
  const Grid g(64);
  const Sht sht(g, 21);
  const Tensor c = random_coeffs(1, 21, rng);
  const Tensor f = sht.synthesis(c);
  const auto& w = sht.quadrature_weights();
  double integral = 0.0;
  for (std::size_t j = 0; j < g.n_lat(); ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < g.n_lon(); ++k) row += f[j * g.n_lon() + k] * f[j * g.n_lon() + k];
    integral += w[j] * row * 2.0 * std::numbers::pi / static_cast<double>(g.n_lon());
  }
  const double energy = dot(c.data, c.data);
  CHECK(std::abs(energy - integral) / energy < 1e-8);
  const auto per_degree = sht.degree_power(c.row(0));
  double s = 0.0;
  for (double e : per_degree) s += e;
  CHECK(std::abs(s - energy) < 1e-10 * energy);
}

TEST_CASE("longitude shifts commute with the band-limited projection") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const Grid g(32);
  const Sht sht(g);
  Tensor f(Shape{1, g.size()});
  for (auto& v : f.data) v = n(rng);
  for (long s : {1L, 5L, -7L}) {
    const Tensor lhs = sht.synthesis(sht.analysis(shift_lon(g, f, s)));
    const Tensor rhs = shift_lon(g, sht.synthesis(sht.analysis(f)), s);
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("transform maps and their adjoints satisfy the dot-product test") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const Grid g(16);
  const Sht sht(g);
  for (const auto& map : {sht.analysis_map(), sht.synthesis_map(), haar_map(g)}) {
    std::vector<double> x(map->in_size());
    std::vector<double> y(map->out_size());
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    std::vector<double> ax(map->out_size());
    std::vector<double> aty(map->in_size());
    map->apply(x, ax);
    map->adjoint()->apply(y, aty);
    const double lhs = dot(ax, y);
    const double rhs = dot(x, aty);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + 1.0));
    std::vector<double> back(map->out_size());
    map->adjoint()->adjoint()->apply(x, back);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == ax[i]);
  }
}

TEST_CASE("transform errors") {
  const Grid g(32);
  CHECK_THROWS_AS(Sht(g, 22), std::invalid_argument);
  const Sht sht(g);
  CHECK_THROWS_AS(sht.analysis(Tensor(Shape{1, 100})), ShapeError);
  CHECK_THROWS_AS(sht.synthesis(Tensor(Shape{1, 10})), ShapeError);
}

TEST_CASE("haar transform") {
  const Grid g(8);
  const Tensor c(Shape{1, g.size()}, 1.75);
  const Tensor s = haar_dwt2(g, c);
  CHECK(s.shape == Shape{4, 32});
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(s.row(0)[i] == 3.5);
    CHECK(s.row(1)[i] == 0.0);
    CHECK(s.row(2)[i] == 0.0);
    CHECK(s.row(3)[i] == 0.0);
  }

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor f(Shape{2, g.size()});
  for (auto& v : f.data) v = n(rng);
  const Tensor h = haar_dwt2(g, f);
  const double e_in = dot(f.data, f.data);
  CHECK(std::abs(dot(h.data, h.data) - e_in) / e_in < 1e-12);
  CHECK(max_abs_diff(haar_idwt2(g, h), f) < 1e-12);

  // Row map agrees with the tensor form.
  const auto m = haar_map(g);
  std::vector<double> out(m->out_size());
  m->apply(f.row(1), out);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < 32; ++i) CHECK(out[b * 32 + i] == h.row(4 + b)[i]);
  }

  CHECK_THROWS_AS(haar_dwt2(Grid(3), Tensor(Shape{1, 18})), ShapeError);
}
