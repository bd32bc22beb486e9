#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sphcast/tensor.hpp"

namespace sphcast {

enum class Role : std::uint8_t { Iterated = 0, OutputOnly = 1, AuxStatic = 2, AuxTemporal = 3 };

const char* role_name(Role r);

struct VariableSpec {
  std::string name;
  Role role = Role::Iterated;
  std::string unit;
  double mean = 0.0;
  double std = 1.0;
  double weight = 1.0;
};

/// Ordered variable list. Construction enforces: roles grouped as
/// iterated, output-only, static auxiliary, temporal auxiliary; unique names;
/// std > 0; weight >= 0.
class VariableRegistry {
 public:
  VariableRegistry() = default;
  explicit VariableRegistry(std::vector<VariableSpec> vars);

  const std::vector<VariableSpec>& vars() const { return vars_; }
  const VariableSpec& operator[](std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }
  std::size_t count(Role r) const;
  /// Indices of all variables with the given role, in registry order.
  std::vector<std::size_t> indices(Role r) const;
  std::size_t index(const std::string& name) const;

  std::size_t n_iterated() const { return count(Role::Iterated); }
  std::size_t n_output_only() const { return count(Role::OutputOnly); }
  /// Iterated + output-only: the model's prediction channels.
  std::size_t n_predicted() const { return n_iterated() + n_output_only(); }
  /// Channels written to dataset files: everything except temporal auxiliaries.
  std::size_t n_stored() const { return size() - count(Role::AuxTemporal); }

  /// FNV-1a over the ordered names; embedded in files and checkpoints.
  std::uint64_t checksum() const;

  void set_stats(std::size_t i, double mean, double std);
  void set_weight(std::size_t i, double w);

  friend bool operator==(const VariableRegistry& a, const VariableRegistry& b);

 private:
  std::vector<VariableSpec> vars_;
};

/// Desk-scale registry: z t r u v sp iterated, 10w tp output-only, terrain
/// static, and the four solar channels. Statistics are placeholders until set
/// from data.
VariableRegistry default_registry();

/// (x - mean) / std per row; rows map to registry variables first..first+rows.
Tensor normalize(const VariableRegistry& reg, const Tensor& state, std::size_t first = 0);
Tensor denormalize(const VariableRegistry& reg, const Tensor& state, std::size_t first = 0);

}  // namespace sphcast
