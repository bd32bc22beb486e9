#include "sphcast/registry.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace sphcast {

const char* role_name(Role r) {
  switch (r) {
    case Role::Iterated: return "iterated";
    case Role::OutputOnly: return "output-only";
    case Role::AuxStatic: return "auxiliary-static";
    case Role::AuxTemporal: return "auxiliary-temporal";
  }
  return "?";
}

VariableRegistry::VariableRegistry(std::vector<VariableSpec> vars) : vars_(std::move(vars)) {
  std::set<std::string> names;
  int last = 0;
  for (const auto& v : vars_) {
    if (v.name.empty() || !names.insert(v.name).second) throw std::invalid_argument("duplicate or empty variable name '" + v.name + "'");
    const int r = static_cast<int>(v.role);
    if (r > 3) throw std::invalid_argument("variable " + v.name + " has an unknown role");
    if (r < last) throw std::invalid_argument("variable " + v.name + " breaks role ordering");
    last = r;
    if (!(v.std > 0.0) || !std::isfinite(v.std) || !std::isfinite(v.mean)) {
      throw std::invalid_argument("variable " + v.name + " needs finite mean and std > 0");
    }
    if (!(v.weight >= 0.0)) throw std::invalid_argument("variable " + v.name + " has negative weight");
  }
}

std::size_t VariableRegistry::count(Role r) const {
  std::size_t n = 0;
  for (const auto& v : vars_) n += v.role == r;
  return n;
}

std::vector<std::size_t> VariableRegistry::indices(Role r) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i].role == r) out.push_back(i);
  return out;
}

std::size_t VariableRegistry::index(const std::string& name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i].name == name) return i;
  throw std::out_of_range("unknown variable " + name);
}

std::uint64_t VariableRegistry::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& v : vars_) {
    for (unsigned char c : v.name) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

void VariableRegistry::set_stats(std::size_t i, double mean, double std) {
  if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw std::invalid_argument("variable " + vars_.at(i).name + " needs finite mean and std > 0");
  }
  vars_.at(i).mean = mean;
  vars_[i].std = std;
}

void VariableRegistry::set_weight(std::size_t i, double w) {
  if (!(w >= 0.0)) throw std::invalid_argument("negative weight for " + vars_.at(i).name);
  vars_.at(i).weight = w;
}

bool operator==(const VariableRegistry& a, const VariableRegistry& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.vars_[i];
    const auto& y = b.vars_[i];
    if (x.name != y.name || x.role != y.role || x.unit != y.unit || x.mean != y.mean || x.std != y.std ||
        x.weight != y.weight)
      return false;
  }
  return true;
}

VariableRegistry default_registry() {
  return VariableRegistry({
      {"z", Role::Iterated, "m", 5500.0, 100.0, 1.0},
      {"t", Role::Iterated, "K", 260.0, 10.0, 1.0},
      {"r", Role::Iterated, "%", 60.0, 20.0, 1.0},
      {"u", Role::Iterated, "m/s", 0.0, 10.0, 1.0},
      {"v", Role::Iterated, "m/s", 0.0, 10.0, 1.0},
      {"sp", Role::Iterated, "hPa", 1010.0, 10.0, 1.0},
      {"10w", Role::OutputOnly, "m/s", 8.0, 5.0, 1.0},
      {"tp", Role::OutputOnly, "mm", 0.5, 1.0, 1.0},
      {"terrain", Role::AuxStatic, "m", 0.0, 1.0, 0.0},
      {"sun_lon", Role::AuxTemporal, "deg", 180.0, 103.923, 0.0},
      {"sun_dist", Role::AuxTemporal, "AU", 1.0, 0.0118, 0.0},
      {"hour_angle", Role::AuxTemporal, "rad", 0.0, 1.8138, 0.0},
      {"cos_zenith", Role::AuxTemporal, "1", 0.0, 0.5, 0.0},
  });
}

namespace {

Tensor apply_norm(const VariableRegistry& reg, const Tensor& state, std::size_t first, bool forward) {
  if (state.rank() != 2 || first + state.shape[0] > reg.size()) {
    throw ShapeError("state with shape " + shape_str(state.shape) + " does not fit registry of " +
                     std::to_string(reg.size()) + " variables");
  }
  Tensor out(state.shape);
  for (std::size_t c = 0; c < state.shape[0]; ++c) {
    const auto& v = reg[first + c];
    const auto in = state.row(c);
    auto o = out.row(c);
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = forward ? (in[i] - v.mean) / v.std : in[i] * v.std + v.mean;
  }
  return out;
}

}  // namespace

Tensor normalize(const VariableRegistry& reg, const Tensor& state, std::size_t first) {
  return apply_norm(reg, state, first, true);
}

Tensor denormalize(const VariableRegistry& reg, const Tensor& state, std::size_t first) {
  return apply_norm(reg, state, first, false);
}

}  // namespace sphcast
