#include "sphcast/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>

#include "sphcast/ops.hpp"

namespace sphcast::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_leaf(Tensor value, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->op = "leaf";
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

// Post-order over nodes that require gradients (inputs before consumers).
std::vector<Node*> topo_order(Node* root, bool include_constants) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node();
      if ((include_constants || child->requires_grad) && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  return order;
}

}  // namespace

const Tensor& Var::value() const {
  if (!node_) throw AutodiffError("access to undefined Var");
  return node_->value;
}

const Shape& Var::shape() const { return value().shape; }

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Var::grad() const {
  if (!node_) throw AutodiffError("access to undefined Var");
  return node_->grad;
}

Var constant(Tensor value) { return Var(new_leaf(std::move(value), false, {})); }
Var constant(double value) { return constant(Tensor::scalar(value)); }

Var variable(Tensor value, std::string name) { return Var(new_leaf(std::move(value), true, std::move(name))); }

Var placeholder(std::string name, Shape shape) {
  auto n = new_leaf(Tensor(std::move(shape)), true, std::move(name));
  n->op = "placeholder";
  n->needs_binding = true;
  return Var(std::move(n));
}

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

Var make_op(std::string op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward, bool second_order) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  bool track = false;
  for (const auto& in : inputs) {
    if (!in.defined()) throw AutodiffError(op + ": undefined input");
    values.push_back(&in.value());
    track = track || in.requires_grad();
  }
  auto n = std::make_shared<Node>();
  n->op = std::move(op);
  n->value = forward(values);
  if (track && g_grad_enabled) {
    n->inputs = std::move(inputs);
    n->requires_grad = true;
    n->second_order = second_order;
    n->forward = std::move(forward);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

Tensor evaluate(const Var& root, const Bindings& bindings) {
  if (!root.defined()) throw AutodiffError("evaluate: undefined root");
  const auto order = topo_order(root.node(), true);
  std::unordered_map<Node*, Tensor> values;
  for (Node* node : order) {
    if (node->inputs.empty()) {
      if (node->needs_binding) {
        auto it = bindings.find(node->name);
        if (it == bindings.end()) throw UnboundInputError("evaluate: input '" + node->name + "' is not bound");
        if (it->second.shape != node->value.shape) {
          throw ShapeError("evaluate: binding for '" + node->name + "' has shape " + shape_str(it->second.shape) +
                           ", expected " + shape_str(node->value.shape));
        }
        values.emplace(node, it->second);
      } else {
        values.emplace(node, node->value);
      }
      continue;
    }
    std::vector<const Tensor*> in;
    in.reserve(node->inputs.size());
    for (const auto& v : node->inputs) in.push_back(&values.at(v.node()));
    values.emplace(node, node->forward(in));
  }
  return values.at(root.node());
}

std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph) {
  if (!root.defined()) throw AutodiffError("grad: undefined root");
  if (root.size() != 1) throw AutodiffError("grad: root must be scalar, got shape " + shape_str(root.shape()));

  std::unordered_map<Node*, Var> grads;
  std::unordered_set<Node*> keep;
  for (const auto& w : wrt) keep.insert(w.node());

  if (root.requires_grad()) {
    GradModeGuard mode(create_graph);
    const auto order = topo_order(root.node(), false);
    grads.emplace(root.node(), constant(Tensor(root.shape(), 1.0)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      auto g = grads.find(node);
      if (g == grads.end() || node->inputs.empty()) continue;
      if (create_graph && !node->second_order) {
        throw SecondOrderError("op '" + node->op + "' has no second-order rule");
      }
      const Var gout = g->second;
      if (!keep.count(node)) grads.erase(g);
      auto gin = node->backward(node->inputs, Var(node->shared_from_this()), gout);
      for (std::size_t i = 0; i < node->inputs.size(); ++i) {
        const Var& input = node->inputs[i];
        if (!input.requires_grad() || i >= gin.size() || !gin[i].defined()) continue;
        auto [slot, inserted] = grads.try_emplace(input.node(), gin[i]);
        if (!inserted) slot->second = add(slot->second, gin[i]);
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto g = grads.find(w.node());
    out.push_back(g != grads.end() ? g->second : constant(Tensor(w.shape(), 0.0)));
  }
  return out;
}

void backward(const Var& root) {
  if (root.size() != 1) throw AutodiffError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  if (!root.requires_grad()) return;
  std::vector<Var> leaves;
  for (Node* n : topo_order(root.node(), false)) {
    if (n->inputs.empty()) leaves.emplace_back(n->shared_from_this());
  }
  const auto grads = grad(root, leaves, false);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Tensor& slot = leaves[i].grad();
    const Tensor& g = grads[i].value();
    if (slot.shape != g.shape || slot.size() != g.size()) {
      slot = g;
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) slot[k] += g[k];
    }
  }
}

Var grad_norm_penalty(const Var& logit, const std::vector<Var>& inputs) {
  if (logit.size() != 1) throw AutodiffError("grad_norm_penalty: logit must be scalar");
  const auto gs = grad(logit, inputs, true);
  Var total = constant(0.0);
  for (const auto& g : gs) total = add(total, sum(square(g)));
  return total;
}

}  // namespace sphcast::ad
