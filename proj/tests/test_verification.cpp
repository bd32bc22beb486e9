#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sphcast/random.hpp"
#include "sphcast/sht.hpp"
#include "sphcast/synth.hpp"
#include "sphcast/verification.hpp"

using namespace sphcast;

namespace {

std::vector<double> random_field(const Grid& g, Rng& rng, double mean = 0.0, double s = 1.0) {
  std::vector<double> f(g.size());
  for (auto& v : f) v = mean + s * rng.normal();
  return f;
}

// 3x3 box mean, wrapping in longitude and clamping at the polar rows.
std::vector<double> box_blur(const Grid& g, std::span<const double> f) {
  const long nl = static_cast<long>(g.n_lat()), nk = static_cast<long>(g.n_lon());
  std::vector<double> out(f.size());
  for (long j = 0; j < nl; ++j)
    for (long k = 0; k < nk; ++k) {
      double s = 0.0;
      for (long dj = -1; dj <= 1; ++dj)
        for (long dk = -1; dk <= 1; ++dk) {
          const long jj = std::clamp(j + dj, 0L, nl - 1);
          const long kk = (k + dk + nk) % nk;
          s += f[static_cast<std::size_t>(jj * nk + kk)];
        }
      out[static_cast<std::size_t>(j * nk + k)] = s / 9.0;
    }
  return out;
}

WeatherState state_of(std::int64_t time, Tensor fields) { return WeatherState{time, std::move(fields)}; }

}  // namespace

TEST_CASE("rmse: zero on identity, constant offset, hand-computed weights") {
  Rng rng(3);
  const Grid g(8);
  const auto t = random_field(g, rng);
  CHECK(rmse(g, t, t) == 0.0);
  auto f = t;
  for (auto& v : f) v += 2.5;
  CHECK(rmse(g, f, t) == doctest::Approx(2.5).epsilon(1e-14));

  // 4 rows: the top row spans 45..90 N, a fraction (1 - sin 45) / 2 of the sphere.
  const Grid g4(4);
  std::vector<double> a(g4.size(), 0.0), b(g4.size(), 0.0);
  for (std::size_t k = 0; k < g4.n_lon(); ++k) a[k] = 1.0;
  CHECK(rmse(g4, a, b) == doctest::Approx(std::sqrt((1.0 - std::sqrt(0.5)) / 2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(rmse(g4, std::vector<double>(3), b), ShapeError);
}

TEST_CASE("rmse is symmetric and obeys the triangle inequality") {
  Rng rng(4);
  const Grid g(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_field(g, rng), y = random_field(g, rng), z = random_field(g, rng);
    CHECK(rmse(g, x, y) == rmse(g, y, x));
    CHECK(rmse(g, x, z) <= rmse(g, x, y) + rmse(g, y, z) + 1e-12);
  }
}

TEST_CASE("acc: perfect, reversed, scaled and undefined") {
  Rng rng(5);
  const Grid g(8);
  const auto clim = random_field(g, rng, 280.0, 10.0);
  auto t = clim;
  for (auto& v : t) v += rng.normal();
  CHECK(*acc(g, t, t, clim) == 1.0);

  std::vector<double> rev(g.size()), twice(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    rev[p] = clim[p] - (t[p] - clim[p]);
    twice[p] = clim[p] + 2.0 * (t[p] - clim[p]);
  }
  CHECK(*acc(g, rev, t, clim) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(*acc(g, twice, t, clim) == doctest::Approx(1.0).epsilon(1e-12));

  // Independent noise is nearly uncorrelated; a noisy copy sits in between.
  const auto noise = random_field(g, rng, 280.0, 1.0);
  std::vector<double> noisy(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) noisy[p] = t[p] + 0.5 * (noise[p] - 280.0);
  const double a_noise = *acc(g, noise, t, clim);
  const double a_noisy = *acc(g, noisy, t, clim);
  CHECK(std::abs(a_noise) < 0.3);
  CHECK(a_noisy > 0.7);
  CHECK(a_noisy < 1.0);

  CHECK_FALSE(acc(g, clim, t, clim).has_value());
}

TEST_CASE("weighted quantile picks the first value reaching the level") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  const std::vector<double> w(4, 1.0);
  CHECK(weighted_quantile(v, w, 0.5) == 2.0);
  CHECK(weighted_quantile(v, w, 0.75) == 3.0);
  CHECK(weighted_quantile(v, w, 1.0) == 4.0);
  CHECK(weighted_quantile(v, std::vector<double>{5, 1, 1, 1}, 0.5) == 4.0);
  CHECK_THROWS(weighted_quantile(std::vector<double>{}, std::vector<double>{}, 0.5));
  CHECK_THROWS(weighted_quantile(v, w, 1.5));
}

TEST_CASE("rqe: identity, scaling, blur and the latitude mask") {
  Rng rng(6);
  const Grid g(32);
  // A positive wind-speed-like field from two random components.
  const auto u = random_field(g, rng, 0.0, 6.0), v = random_field(g, rng, 0.0, 6.0);
  std::vector<double> t(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) t[p] = std::hypot(u[p], v[p]);

  CHECK(*rqe(g, t, t, Tail::High) == 0.0);
  CHECK(*rqe(g, t, t, Tail::Low) == 0.0);
  CHECK(*rqe(g, t, t, Tail::Both) == 0.0);

  auto scaled = t;
  for (auto& x : scaled) x *= 1.1;
  CHECK(*rqe(g, scaled, t, Tail::High) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(*rqe(g, scaled, t, Tail::Low) == doctest::Approx(-0.1).epsilon(1e-6));

  CHECK(*rqe(g, box_blur(g, t), t, Tail::High) < 0.0);

  // Cells poleward of 60 degrees do not count.
  auto polar = t;
  for (std::size_t j = 0; j < g.n_lat(); ++j)
    if (std::abs(g.lat_deg(j)) > 60.0)
      for (std::size_t k = 0; k < g.n_lon(); ++k) polar[j * g.n_lon() + k] = 1e6;
  CHECK(*rqe(g, polar, t, Tail::High) == 0.0);

  RqeSpec none;
  none.max_abs_lat = -1.0;
  CHECK_THROWS(rqe(g, t, t, Tail::High, none));

  // All-zero truth has no usable quantile.
  const std::vector<double> zeros(g.size(), 0.0);
  CHECK_FALSE(rqe(g, t, zeros, Tail::High).has_value());
}

TEST_CASE("rqe of a blurred synthetic wind field is negative") {
  SynthConfig sc;
  sc.n_steps = 12;
  const Dataset ds = synth_generate(sc);
  const std::size_t w = ds.registry.index("10w");
  for (std::size_t i = 4; i < ds.samples(); i += 4) {
    const Tensor s = ds.sample(i);
    const auto t = s.row(w);
    CHECK(*rqe(ds.grid, box_blur(ds.grid, t), t, Tail::High) < 0.0);
  }
}

TEST_CASE("derived variables") {
  const Tensor u(Shape{1, 2}, {3.0, -5.0}), v(Shape{1, 2}, {4.0, 12.0});
  const Tensor s = wind_speed(u, v, "m/s", "m/s");
  CHECK(s[0] == 5.0);
  CHECK(s[1] == 13.0);
  CHECK_THROWS(wind_speed(u, v, "m/s", "kt"));
  CHECK_THROWS_AS(wind_speed(u, Tensor(Shape{1, 3}), "m/s", "m/s"), ShapeError);

  const Tensor p(Shape{1, 2}, {1013.25, 990.0});
  const Tensor d = mslp_departure(p, "hPa");
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(-23.25));
  CHECK_THROWS(mslp_departure(p, "Pa"));

  const Tensor a = anomaly(p, Tensor(Shape{1, 2}, {1000.0, 1000.0}));
  CHECK(a[0] == 13.25);
  CHECK(a[1] == -10.0);
}

TEST_CASE("evaluate_run: layout, truth as forecast, and averaging") {
  SynthConfig sc;
  sc.n_lat = 16;
  sc.n_steps = 10;
  const Dataset ds = synth_generate(sc);
  const auto& reg = ds.registry;
  const std::size_t np = reg.n_predicted();
  const std::size_t P = ds.grid.size();
  auto predicted = [&](std::size_t i) {
    const Tensor s = ds.sample(i);
    return Tensor(Shape{np, P}, std::vector<double>(s.data.begin(), s.data.begin() + np * P));
  };
  const Tensor clim = [&] {
    const Tensor c = climatology(ds, 0, ds.samples());
    return Tensor(Shape{np, P}, std::vector<double>(c.data.begin(), c.data.begin() + np * P));
  }();

  std::vector<WeatherState> truth, persist;
  for (std::size_t k = 1; k <= 3; ++k) {
    truth.push_back(state_of(ds.times[k], predicted(k)));
    persist.push_back(state_of(ds.times[k], predicted(0)));
  }

  const MetricReport perfect = evaluate_run(truth, truth, clim, reg, ds.grid, ds.times[0]);
  REQUIRE(perfect.rows.size() == np * 3);
  CHECK(perfect.rows[0].variable == reg[0].name);
  CHECK(perfect.rows[0].lead_hours == 6.0);
  CHECK(perfect.rows[2].lead_hours == 18.0);
  for (const auto& r : perfect.rows) {
    CHECK(r.rmse == 0.0);
    REQUIRE(r.acc.has_value());
    CHECK(*r.acc == 1.0);
    REQUIRE(r.rqe.has_value());
    CHECK(*r.rqe == 0.0);
  }

  const MetricReport pers = evaluate_run(persist, truth, clim, reg, ds.grid, ds.times[0]);
  const std::size_t iz = reg.index("z");
  CHECK(pers.at("z", 12.0).rmse == rmse(ds.grid, predicted(0).row(iz), predicted(2).row(iz)));
  CHECK(pers.at("z", 6.0).rmse > 0.0);
  CHECK_THROWS(pers.at("z", 7.0));

  const MetricReport avg = average_reports({perfect, pers});
  CHECK(avg.initial_conditions == 2);
  CHECK(avg.at("t", 18.0).rmse == doctest::Approx(0.5 * pers.at("t", 18.0).rmse));

  const std::string text = pers.to_text();
  CHECK(text.find("z,6,rmse,") != std::string::npos);
  CHECK(text.find("tp,18,rqe,") != std::string::npos);

  // Mismatched valid times and lengths are rejected.
  auto shifted = truth;
  shifted[1].time += 3600;
  CHECK_THROWS(evaluate_run(shifted, truth, clim, reg, ds.grid, ds.times[0]));
  CHECK_THROWS(evaluate_run({truth[0]}, truth, clim, reg, ds.grid, ds.times[0]));
}

TEST_CASE("undefined metrics print as undefined and drop out of averages") {
  MetricReport a, b;
  a.initial_conditions = b.initial_conditions = 1;
  a.rows.push_back(MetricRow{"sp", 6.0, 1.0, std::nullopt, 0.2});
  b.rows.push_back(MetricRow{"sp", 6.0, 3.0, 0.5, std::nullopt});
  CHECK(a.to_text() == "sp,6,rmse,1\nsp,6,acc,undefined\nsp,6,rqe,0.2\n");
  const MetricReport m = average_reports({a, b});
  CHECK(m.rows[0].rmse == 2.0);
  CHECK(*m.rows[0].acc == 0.5);
  CHECK(*m.rows[0].rqe == 0.2);
  b.rows[0].variable = "z";
  CHECK_THROWS(average_reports({a, b}));
}

TEST_CASE("degree spectrum of a single harmonic") {
  const Grid g(32);
  const Sht sht(g, 15);
  std::vector<double> c(sht.n_coeffs(), 0.0), f(g.size());
  c[Sht::index(7, 3)] = 2.0;
  sht.synthesize(c, f);
  const auto e = degree_spectrum(g, f, 15);
  REQUIRE(e.size() == 16);
  for (std::size_t l = 0; l < e.size(); ++l) {
    if (l == 7) {
      CHECK(e[l] > 1.0);
    } else {
      CHECK(e[l] < 1e-20);
    }
  }
}

TEST_CASE("pgm output") {
  const Grid g(4);
  std::vector<double> f(g.size());
  for (std::size_t p = 0; p < f.size(); ++p) f[p] = static_cast<double>(p);
  const auto path = std::filesystem::temp_directory_path() / "sphcast_test.pgm";
  write_pgm(path.string(), g, f);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, mx = 0;
  in >> magic >> w >> h >> mx;
  in.get();
  CHECK(magic == "P5");
  CHECK(w == 8);
  CHECK(h == 4);
  CHECK(mx == 255);
  std::string px((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(px.size() == 32);
  CHECK(static_cast<unsigned char>(px.front()) == 0);
  CHECK(static_cast<unsigned char>(px.back()) == 255);
  std::filesystem::remove(path);
}
