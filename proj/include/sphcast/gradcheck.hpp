#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sphcast/autodiff.hpp"

namespace sphcast::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-tensor normwise relative error
  std::size_t probes = 0;
};

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Compares reverse-mode gradients of `f` at `point` against central
/// differences. At most `max_coords` random coordinates are probed per input;
/// the error of each input is max|analytic - numeric| / max|numeric|.
GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& point, double step = 1e-4,
                                std::size_t max_coords = 24, std::uint64_t seed = 1);

/// Same as check_gradients but for the gradient of a second-order quantity:
/// `f` may itself call grad(..., create_graph = true).
GradCheckResult check_gradients_of(const ScalarFn& f, const std::vector<Tensor>& point, double step = 1e-4,
                                   std::size_t max_coords = 24, std::uint64_t seed = 1);

}  // namespace sphcast::ad
