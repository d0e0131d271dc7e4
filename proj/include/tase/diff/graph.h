#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tase/diff/tensor.h"

namespace tase::diff {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Receives the node id and its upstream gradient; accumulates into input
// gradients through Graph::grad_of.
using BackwardFn = std::function<void(Graph&, int self, std::span<const double> upstream)>;

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is always a valid topological order and backward walks it in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  // Differentiable input whose gradient is read back with gradient().
  Var leaf(Tensor t);
  // Trainable parameter; backward accumulates into p.grad().
  Var param(Tensor& p);

  Var record(const char* op, Tensor value, std::vector<int> inputs, BackwardFn backward);

  // Runs reverse accumulation from a scalar loss. Every node is visited once.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated on first use.
  std::span<double> grad_of(int id);
  // Gradient of a leaf or parameter after backward.
  std::vector<double> gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t visited() const { return visited_; }
  const char* op_name(int id) const { return nodes_[id].op; }

  // Fault injection for gradient-check self tests: negates the backward
  // contribution of every node recorded under this op name.
  void set_fault(std::string op) { fault_ = std::move(op); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    std::vector<double> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::string fault_;
  std::size_t visited_ = 0;
};

}  // namespace tase::diff
