#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "tase/diff/grad_check.h"
#include "tase/diff/graph.h"
#include "tase/diff/tensor.h"

namespace tase::tride {

using diff::Tensor;
using diff::Var;

// Which learning rate a parameter trains under; frozen tensors never train.
enum class ParamGroup { kModule, kAdapter, kFrozen };

const char* group_name(ParamGroup g);
ParamGroup parse_group(const std::string& s);

// Named tensors with stable addresses, kept in insertion order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value, ParamGroup group);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  ParamGroup group(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t count(ParamGroup group) const;  // scalar count

  void zero_grad();
  double grad_norm(ParamGroup group) const;

  nlohmann::json to_json() const;
  // Overwrites values of existing entries; names, shapes and groups must match.
  void load_json(const nlohmann::json& j);

 private:
  struct Entry {
    std::string name;
    Tensor value;
    ParamGroup group;
  };
  std::vector<std::unique_ptr<Entry>> entries_;
  std::map<std::string, Entry*> index_;
};

// Binds store entries into one graph, creating each node at most once.
class Binder {
 public:
  Binder(diff::Graph& g, ParamStore& store) : g_(&g), store_(&store) {}
  Var operator()(const std::string& name);
  // Routes `name` to an existing node of the same graph.
  void set(const std::string& name, Var v) { bound_[name] = v; }
  diff::Graph& graph() const { return *g_; }
  ParamStore& store() const { return *store_; }

 private:
  diff::Graph* g_;
  ParamStore* store_;
  std::map<std::string, Var> bound_;
};

// Finite-difference check of a store-built scalar function with respect to
// the named parameters.
diff::GradCheckReport grad_check_params(std::string op, ParamStore& store, const std::vector<std::string>& names,
                                        const std::function<Var(Binder&)>& build,
                                        const diff::GradCheckOptions& options = {});

}  // namespace tase::tride
