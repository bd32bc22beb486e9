#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sphcast/dataset.hpp"
#include "sphcast/ops.hpp"

namespace sphcast {

constexpr double kAlpha = 0.05;
constexpr double kGamma = 0.1;
constexpr double kProbEps = 1e-7;
constexpr double kSigmaFloor = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// sigma(v, k) for predicted variables (iterated, then output-only) and lead
/// steps k = 1..t_max, in normalized units. +inf marks terms that never count.
struct SigmaTable {
  std::vector<std::string> names;
  std::size_t t_max = 0;
  std::vector<double> values;  // (variable, k - 1)

  double at(std::size_t v, std::size_t k) const;
  friend bool operator==(const SigmaTable&, const SigmaTable&) = default;
};

/// Registry with statistics plus the sigma table, stored as one sidecar file.
struct StatsFile {
  VariableRegistry registry;
  SigmaTable sigma;
};

void write_sigma(ByteWriter& w, const SigmaTable& s);
SigmaTable read_sigma(ByteReader& r);
void write_stats(const StatsFile& s, const std::string& path);
StatsFile read_stats(const std::string& path);

/// Area-weighted std over samples and grid of x(t + k) - x(t) for iterated
/// variables (normalized by the registry std); output-only variables get the
/// std of the variable itself at k = 1 and +inf beyond. Floored at sigma_floor.
SigmaTable compute_sigma_stats(const Dataset& ds, std::size_t t_max, double sigma_floor = kSigmaFloor);

/// 200 ln(1 + x^2 / 200)
double robust_f(double x);
ad::Var robust_f(const ad::Var& x);

/// (1/T) sum_k sum_v w_v sum_g |g| f((pred - truth) / sigma(v, k)) for one
/// sample; pred[k] and truth[k] are normalized (predicted channels, points).
/// `scale` multiplies the whole loss (replay-buffer down-weighting).
ad::Var regression_loss(const std::vector<ad::Var>& pred, const std::vector<Tensor>& truth,
                        const VariableRegistry& reg, const SigmaTable& sigma, const Grid& grid, double scale = 1.0);

/// -mean log(clamp(p, eps, 1)) over the given probabilities.
ad::Var adversarial_loss_g(const std::vector<ad::Var>& scores);
/// -mean log real - mean log(1 - fake) + gamma / 2 * penalty.
ad::Var discriminator_loss(const std::vector<ad::Var>& real, const std::vector<ad::Var>& fake, const ad::Var& penalty,
                           double gamma = kGamma);
/// L_MSE + alpha L_adv.
ad::Var generator_loss(const ad::Var& l_mse, const ad::Var& l_adv, double alpha = kAlpha);

}  // namespace sphcast
