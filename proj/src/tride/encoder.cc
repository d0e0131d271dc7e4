#include "tase/tride/encoder.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "tase/diff/ops.h"
#include "tase/tride/lora.h"

namespace tase::tride {

namespace {

Tensor gaussian(std::mt19937_64& rng, diff::Shape shape, double std) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, std);
  for (double& v : t.values()) v = n(rng);
  return t;
}

}  // namespace

EncoderStub::EncoderStub(Vocabulary vocab, EncoderConfig config, ParamStore& store, const LexicalPrior& prior)
    : vocab_(std::move(vocab)), config_(config) {
  const std::size_t d = config_.d_model;
  if (d == 0) throw std::invalid_argument("EncoderStub: d_model must be positive");
  std::mt19937_64 rng(config_.seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor table = gaussian(rng, {vocab_.size(), d}, unit);
  if (prior) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      auto p = prior(vocab_.token(static_cast<int>(i)));
      if (!p) continue;
      if (p->size() != d) throw std::invalid_argument("EncoderStub: lexical prior has wrong dimension");
      for (std::size_t j = 0; j < d; ++j) {
        table.at(i, j) = config_.prior_weight * (*p)[j] + config_.token_noise * table.at(i, j);
      }
    }
  }
  store.add("encoder.table", std::move(table), ParamGroup::kFrozen);
  if (!config_.self_attention) return;
  store.add("encoder.wq", gaussian(rng, {d, d}, unit), ParamGroup::kFrozen);
  store.add("encoder.wk", gaussian(rng, {d, d}, unit), ParamGroup::kFrozen);
  store.add("encoder.wv", gaussian(rng, {d, d}, unit), ParamGroup::kFrozen);
  store.add("encoder.wo", gaussian(rng, {d, d}, 0.5 * unit), ParamGroup::kFrozen);
  if (!config_.adapters) return;
  for (const char* target : {"q", "v"}) {
    LoraAdapter a = make_lora(d, d, config_.lora_rank, config_.lora_alpha, target, rng);
    store.add(std::string("encoder.lora_") + target + ".down", std::move(a.down), ParamGroup::kAdapter);
    store.add(std::string("encoder.lora_") + target + ".up", std::move(a.up), ParamGroup::kAdapter);
  }
}

std::vector<double> EncoderStub::position_code(std::size_t pos) const {
  const std::size_t d = config_.d_model;
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
    const double a = static_cast<double>(pos) * freq;
    out[i] = config_.pe_scale * (i % 2 == 0 ? std::sin(a) : std::cos(a));
  }
  return out;
}

Var EncoderStub::encode(Binder& b, const std::string& caption) const { return encode_ids(b, vocab_.tokenize(caption)); }

Var EncoderStub::encode_ids(Binder& b, const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("encode: empty caption");
  const std::size_t d = config_.d_model;
  const Tensor& table = b.store().at("encoder.table");
  Tensor x0(diff::Shape{ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto pe = position_code(t);
    for (std::size_t j = 0; j < d; ++j) x0.at(t, j) = table.at(static_cast<std::size_t>(ids[t]), j) + pe[j];
  }
  Var x = b.graph().constant(std::move(x0));
  if (!config_.self_attention) return x;
  const double s = config_.lora_alpha / static_cast<double>(config_.lora_rank);
  Var q, v;
  if (config_.adapters) {
    q = lora_apply(x, b("encoder.wq"), b("encoder.lora_q.down"), b("encoder.lora_q.up"), s);
    v = lora_apply(x, b("encoder.wv"), b("encoder.lora_v.down"), b("encoder.lora_v.up"), s);
  } else {
    q = diff::matmul(x, b("encoder.wq"));
    v = diff::matmul(x, b("encoder.wv"));
  }
  Var k = diff::matmul(x, b("encoder.wk"));
  Var scores = diff::scale(diff::matmul(q, diff::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var attended = diff::matmul(diff::softmax(scores), v);
  return diff::add(x, diff::matmul(attended, b("encoder.wo")));
}

Tensor EncoderStub::encode(ParamStore& store, const std::string& caption) const {
  diff::Graph g;
  Binder b(g, store);
  return encode(b, caption).value();
}

}  // namespace tase::tride
