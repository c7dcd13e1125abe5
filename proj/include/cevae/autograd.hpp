#ifndef CEVAE_AUTOGRAD_HPP_
#define CEVAE_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "cevae/tensor.hpp"

namespace cevae {

// Reverse-mode autodiff over a dynamically built tape. Each Node owns its
// value; grads are accumulated into Node::grad during backward().
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    return grad;
  }
  void zero_grad() {
    for (auto& g : grad.data) g = 0.0;
  }
};

// Graph recording can be switched off for inference; ops then emit detached
// leaves and intermediates are freed as soon as they go out of scope.
namespace grad_mode {
inline bool& enabled() {
  thread_local bool on = true;
  return on;
}
}  // namespace grad_mode

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode::enabled()) { grad_mode::enabled() = false; }
  ~NoGradGuard() { grad_mode::enabled() = prev; }
};

inline Var make_leaf(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
  bool track = grad_mode::enabled();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p->requires_grad) track = true;
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

// Detach: same value, no history.
inline Var detach(const Var& v) { return make_leaf(v->value, false); }

// Runs reverse accumulation from a scalar (or with an explicit seed grad).
// The graph stays alive while the root Var is held, so a second backward
// after zeroing grads is legal.
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  if (!root->requires_grad && !seed) {
    if (root->value.numel() != 1)
      throw Error(ErrorKind::Contract, "backward: root must be scalar");
  }
  // Topological order by DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx == 0 && seen.count(n)) {
      stack.pop_back();
      continue;
    }
    if (idx < n->parents.size()) {
      Node* child = n->parents[idx++].get();
      if (!seen.count(child)) stack.push_back({child, 0});
    } else {
      seen.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }
  if (seed) {
    if (seed->shape != root->value.shape)
      throw Error(ErrorKind::Contract, "backward: seed shape mismatch");
    Tensor& g = root->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += (*seed)[i];
  } else {
    if (root->value.numel() != 1)
      throw Error(ErrorKind::Contract, "backward: root must be scalar");
    root->ensure_grad()[0] += 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
  }
}

// Zeroes the grad of every node reachable from root. Needed between backward
// passes that share subgraphs (e.g. two losses built on one forward), since
// backward() accumulates into intermediate grads as well as leaves.
inline void zero_graph(const Var& root) {
  std::vector<Node*> stack{root.get()};
  std::unordered_set<Node*> seen{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    n->zero_grad();
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
}

}  // namespace cevae

#endif  // CEVAE_AUTOGRAD_HPP_
