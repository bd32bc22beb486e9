#include "sphcast/params.hpp"

#include <stdexcept>

namespace sphcast {

ad::Var ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name) || buffers_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  ad::Var v = ad::variable(std::move(init), name);
  index_[name] = params_.size();
  params_.push_back({name, v});
  return v;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor init) {
  if (index_.count(name) || buffers_.count(name)) throw std::invalid_argument("duplicate buffer name " + name);
  return buffers_.emplace(name, std::move(init)).first->second;
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second].var;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) || buffers_.count(name); }

Tensor& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw std::out_of_range("no buffer named " + name);
  return it->second;
}

const Tensor& ParamStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw std::out_of_range("no buffer named " + name);
  return it->second;
}

std::vector<ad::Var> ParamStore::vars() const {
  std::vector<ad::Var> out;
  out.reserve(params_.size());
  for (const auto& e : params_) out.push_back(e.var);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : params_) n += e.var.size();
  return n;
}

void ParamStore::assign(const std::string& name, const Tensor& value) {
  ad::Var v = get(name);
  if (v.shape() != value.shape) {
    throw ShapeError("parameter " + name + " has shape " + shape_str(v.shape()) + ", got " + shape_str(value.shape));
  }
  v.node()->value.data = value.data;
}

}  // namespace sphcast
