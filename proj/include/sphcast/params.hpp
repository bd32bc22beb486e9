#pragma once

#include <map>
#include <string>
#include <vector>

#include "sphcast/autodiff.hpp"

namespace sphcast {

/// Named trainable parameters plus named non-trainable state buffers
/// (power-iteration vectors, fixed scales). Insertion order is kept and is the
/// order used by optimizers and checkpoints.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
  };

  ad::Var add(const std::string& name, Tensor init);
  Tensor& add_buffer(const std::string& name, Tensor init);

  ad::Var get(const std::string& name) const;
  bool contains(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;

  const std::vector<Entry>& params() const { return params_; }
  std::vector<ad::Var> vars() const;
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }
  std::map<std::string, Tensor>& buffers() { return buffers_; }

  /// Total number of trainable scalars.
  std::size_t scalar_count() const;

  /// Overwrites a parameter value in place; shapes must agree.
  void assign(const std::string& name, const Tensor& value);

 private:
  std::vector<Entry> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Tensor> buffers_;
};

}  // namespace sphcast
