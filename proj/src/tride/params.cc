#include "tase/tride/params.h"

#include <cmath>
#include <stdexcept>

namespace tase::tride {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kModule:
      return "module";
    case ParamGroup::kAdapter:
      return "adapter";
    case ParamGroup::kFrozen:
      return "frozen";
  }
  return "?";
}

ParamGroup parse_group(const std::string& s) {
  if (s == "module") return ParamGroup::kModule;
  if (s == "adapter") return ParamGroup::kAdapter;
  if (s == "frozen") return ParamGroup::kFrozen;
  throw std::invalid_argument("unknown parameter group '" + s + "'");
}

Tensor& ParamStore::add(const std::string& name, Tensor value, ParamGroup group) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  entries_.push_back(std::make_unique<Entry>(Entry{name, std::move(value), group}));
  index_[name] = entries_.back().get();
  return entries_.back()->value;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return it->second->value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return it->second->value;
}

ParamGroup ParamStore::group(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return it->second->group;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e->name);
  return out;
}

std::size_t ParamStore::count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e->group == group) n += e->value.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e->value.drop_grad();
}

double ParamStore::grad_norm(ParamGroup group) const {
  double s = 0.0;
  for (const auto& e : entries_) {
    if (e->group != group || !e->value.has_grad()) continue;
    for (double g : e->value.grad()) s += g * g;
  }
  return std::sqrt(s);
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& e : entries_) {
    out[e->name] = {{"group", group_name(e->group)},
                    {"shape", e->value.shape()},
                    {"values", std::vector<double>(e->value.values().begin(), e->value.values().end())}};
  }
  return out;
}

void ParamStore::load_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("parameter map must be a JSON object");
  if (j.size() != entries_.size()) {
    throw std::invalid_argument("parameter map has " + std::to_string(j.size()) + " entries, model expects " +
                                std::to_string(entries_.size()));
  }
  for (auto& e : entries_) {
    if (!j.contains(e->name)) throw std::invalid_argument("parameter map lacks " + e->name);
    const auto& item = j.at(e->name);
    const auto shape = item.at("shape").get<diff::Shape>();
    if (shape != e->value.shape()) {
      throw std::invalid_argument("parameter " + e->name + " has shape " + diff::shape_string(shape) + ", expected " +
                                  diff::shape_string(e->value.shape()));
    }
    if (parse_group(item.at("group").get<std::string>()) != e->group) {
      throw std::invalid_argument("parameter " + e->name + " has a different group");
    }
    auto values = item.at("values").get<std::vector<double>>();
    if (values.size() != e->value.size()) throw std::invalid_argument("parameter " + e->name + " has wrong length");
    e->value = Tensor(shape, std::move(values));
  }
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Tensor& t = store_->at(name);
  Var v = store_->group(name) == ParamGroup::kFrozen ? g_->constant(t) : g_->param(t);
  bound_.emplace(name, v);
  return v;
}

diff::GradCheckReport grad_check_params(std::string op, ParamStore& store, const std::vector<std::string>& names,
                                        const std::function<Var(Binder&)>& build,
                                        const diff::GradCheckOptions& options) {
  std::vector<Tensor> inputs;
  for (const auto& n : names) inputs.push_back(store.at(n));
  auto fn = [&](diff::Graph& g, std::span<const Var> leaves) {
    Binder b(g, store);
    for (std::size_t i = 0; i < names.size(); ++i) b.set(names[i], leaves[i]);
    return build(b);
  };
  auto report = diff::grad_check_fn(std::move(op), fn, inputs, options);
  store.zero_grad();
  return report;
}

}  // namespace tase::tride
