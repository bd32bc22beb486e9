#pragma once

// Reverse-mode differentiation over a small closed op set.
//
// Graphs are built eagerly (define-by-run). Every op node keeps a pure forward
// closure, so a recorded graph can be replayed with new placeholder bindings
// through evaluate(). Backward rules are written in terms of the same ops, which
// makes gradients themselves differentiable when grad() is called with
// create_graph = true. Ops whose backward rule is hand-written on raw tensors are
// flagged first-order only and reject second-order requests.

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphcast/tensor.hpp"

namespace sphcast::ad {

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SecondOrderError : public AutodiffError {
 public:
  using AutodiffError::AutodiffError;
};

class UnboundInputError : public AutodiffError {
 public:
  using AutodiffError::AutodiffError;
};

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  /// Gradient accumulated by backward(); zero-shaped until the first call.
  Tensor& grad() const;

 private:
  std::shared_ptr<Node> node_;
};

using ForwardFn = std::function<Tensor(const std::vector<const Tensor*>&)>;
using BackwardFn =
    std::function<std::vector<Var>(const std::vector<Var>& inputs, const Var& output, const Var& grad_out)>;

struct Node : std::enable_shared_from_this<Node> {
  std::string op;
  std::vector<Var> inputs;
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool second_order = true;
  bool needs_binding = false;
  std::string name;
  ForwardFn forward;
  BackwardFn backward;
};

Var constant(Tensor value);
Var constant(double value);
/// Leaf that participates in differentiation (a parameter or marked input).
Var variable(Tensor value, std::string name = {});
/// Named leaf that must be bound when the graph is replayed with evaluate().
/// Its eager value is zeros of the given shape.
Var placeholder(std::string name, Shape shape);

/// Records a new op node. When gradients are disabled or no input requires
/// them, the result is a constant leaf.
Var make_op(std::string op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward,
            bool second_order = true);

bool grad_enabled();

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

using Bindings = std::map<std::string, Tensor>;

/// Replays the graph under `root` with placeholder values taken from `bindings`.
Tensor evaluate(const Var& root, const Bindings& bindings);

/// Gradients of scalar `root` with respect to `wrt`. Entries not reachable
/// from the root come back as zero constants of the matching shape.
std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph = false);

/// Accumulates d(root)/d(leaf) into the grad() slot of every reachable leaf.
void backward(const Var& root);

/// Squared gradient norm of a scalar logit with respect to `inputs`, kept
/// differentiable so its parameter gradient can be taken.
Var grad_norm_penalty(const Var& logit, const std::vector<Var>& inputs);

}  // namespace sphcast::ad
