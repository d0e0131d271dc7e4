#include "tase/diff/graph.h"

#include <algorithm>
#include <cstring>

namespace tase::diff {

const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("Var: use of an unbound variable");
  return graph_->value(id_);
}

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(id_); }

Var Graph::constant(Tensor t) {
  Node n;
  n.op = "constant";
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::leaf(Tensor t) {
  Node n;
  n.op = "leaf";
  n.value = std::move(t);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Tensor& p) {
  Node n;
  n.op = "param";
  n.value = p;
  n.value.drop_grad();
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(const char* op, Tensor value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (int in : inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) {
      throw std::logic_error(std::string("Graph: input of ") + op + " is not a recorded node");
    }
    if (nodes_[in].requires_grad) n.requires_grad = true;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::span<double> Graph::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::invalid_argument("backward: loss belongs to another graph");
  const Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(root.value.shape()));
  }
  if (!root.requires_grad) throw std::invalid_argument("backward: loss is detached from every parameter");

  for (auto& n : nodes_) n.grad.clear();
  grad_of(loss.id())[0] = 1.0;
  visited_ = 0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    ++visited_;
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto g = n.param->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      continue;
    }
    if (!n.backward) continue;
    if (!fault_.empty() && fault_ == n.op) {
      for (double& g : n.grad) g = -g;
    }
    // The callback may grow other nodes' buffers but never this one.
    std::vector<double> upstream = std::move(n.grad);
    n.backward(*this, id, upstream);
    nodes_[id].grad = std::move(upstream);
  }
}

std::vector<double> Graph::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

}  // namespace tase::diff
