#include "sphcast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sphcast::ad {

namespace {

// `record_in_probes` keeps gradient recording on during the finite-difference
// evaluations; second-order quantities call grad() internally and need it.
GradCheckResult run_check(const ScalarFn& f, const std::vector<Tensor>& point, double step, std::size_t max_coords,
                          std::uint64_t seed, bool record_in_probes) {
  std::vector<Var> inputs;
  for (const auto& t : point) inputs.push_back(variable(t));
  const Var out = f(inputs);
  const auto analytic = grad(out, inputs, false);

  auto value_at = [&](std::size_t which, std::size_t coord, double delta) {
    GradModeGuard mode(record_in_probes);
    std::vector<Var> in;
    for (std::size_t i = 0; i < point.size(); ++i) {
      Tensor t = point[i];
      if (i == which) t[coord] += delta;
      in.push_back(record_in_probes ? variable(std::move(t)) : constant(std::move(t)));
    }
    return f(in).item();
  };

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t i = 0; i < point.size(); ++i) {
    std::vector<std::size_t> coords(point[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(coords.size(), max_coords));
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t c : coords) {
      const double numeric = (value_at(i, c, step) - value_at(i, c, -step)) / (2 * step);
      const double a = analytic[i].value()[c];
      worst = std::max(worst, std::abs(a - numeric));
      scale = std::max({scale, std::abs(numeric), std::abs(a)});
      ++result.probes;
    }
    if (scale > 0.0) result.max_rel_error = std::max(result.max_rel_error, worst / scale);
  }
  return result;
}

}  // namespace

GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& point, double step,
                                std::size_t max_coords, std::uint64_t seed) {
  return run_check(f, point, step, max_coords, seed, false);
}

GradCheckResult check_gradients_of(const ScalarFn& f, const std::vector<Tensor>& point, double step,
                                   std::size_t max_coords, std::uint64_t seed) {
  return run_check(f, point, step, max_coords, seed, true);
}

}  // namespace sphcast::ad
