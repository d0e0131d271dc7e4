#include "tase/tride/tride.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "tase/diff/ops.h"

namespace tase::tride {

using diff::Graph;

const char* placement_name(Placement p) {
  switch (p) {
    case Placement::kNone:
      return "none";
    case Placement::kTokenLevel:
      return "token-level";
    case Placement::kAfterPooling:
      return "after-pooling";
  }
  return "?";
}

const char* attention_name(AttentionVariant a) {
  switch (a) {
    case AttentionVariant::kSelf:
      return "self";
    case AttentionVariant::kLearnableQuery:
      return "learnable-query";
    case AttentionVariant::kLearnableKeyValue:
      return "learnable-key-value";
  }
  return "?";
}

const char* init_name(InitScheme i) { return i == InitScheme::kIdentity ? "identity" : "uniform"; }

Placement parse_placement(const std::string& s) {
  for (Placement p : {Placement::kNone, Placement::kTokenLevel, Placement::kAfterPooling}) {
    if (s == placement_name(p)) return p;
  }
  throw std::invalid_argument("unknown placement '" + s + "' (none, token-level, after-pooling)");
}

AttentionVariant parse_attention(const std::string& s) {
  for (AttentionVariant a :
       {AttentionVariant::kSelf, AttentionVariant::kLearnableQuery, AttentionVariant::kLearnableKeyValue}) {
    if (s == attention_name(a)) return a;
  }
  throw std::invalid_argument("unknown attention variant '" + s + "' (self, learnable-query, learnable-key-value)");
}

InitScheme parse_init(const std::string& s) {
  if (s == "identity") return InitScheme::kIdentity;
  if (s == "uniform") return InitScheme::kUniform;
  throw std::invalid_argument("unknown init scheme '" + s + "' (identity, uniform)");
}

void TriDeConfig::validate() const {
  if (d_model == 0 || dim == 0 || slots == 0 || ffn_hidden == 0) {
    throw std::invalid_argument("TriDeConfig: dimensions must be positive");
  }
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("TriDeConfig: D=" + std::to_string(dim) + " is not divisible by heads=" +
                                std::to_string(heads));
  }
  if (components < 1 || components > 3) throw std::invalid_argument("TriDeConfig: components must be 1, 2 or 3");
}

namespace {

Tensor gaussian(std::mt19937_64& rng, diff::Shape shape, double std) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, std);
  for (double& v : t.values()) v = n(rng);
  return t;
}

Tensor uniform(std::mt19937_64& rng, diff::Shape shape, double a) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-a, a);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor eye(std::size_t r, std::size_t c) {
  Tensor t(diff::Shape{r, c}, 0.0);
  for (std::size_t i = 0; i < std::min(r, c); ++i) t.at(i, i) = 1.0;
  return t;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
Tensor rotation(std::mt19937_64& rng, std::size_t d) {
  Tensor m = gaussian(rng, {d, d}, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double p = 0.0;
      for (std::size_t i = 0; i < d; ++i) p += m.at(i, j) * m.at(i, k);
      for (std::size_t i = 0; i < d; ++i) m.at(i, j) -= p * m.at(i, k);
    }
    double n = 0.0;
    for (std::size_t i = 0; i < d; ++i) n += m.at(i, j) * m.at(i, j);
    n = std::sqrt(n);
    for (std::size_t i = 0; i < d; ++i) m.at(i, j) /= n;
  }
  return m;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(diff::Shape{a.rows(), b.cols()}, 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

std::string comp_key(int c, const char* what) {
  static const char* lower[] = {"o", "a", "r"};
  return std::string("tride.") + what + "_" + lower[c];
}

void add_ffn(ParamStore& s, const std::string& prefix, std::size_t in, std::size_t hidden, InitScheme init,
             std::mt19937_64& rng) {
  const double a1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  if (init == InitScheme::kIdentity) {
    s.add(prefix + ".w1", gaussian(rng, {in, hidden}, a1), ParamGroup::kModule);
    s.add(prefix + ".b1", Tensor(diff::Shape{hidden}, 0.0), ParamGroup::kModule);
    s.add(prefix + ".w2", gaussian(rng, {hidden, in}, 0.1 * a2), ParamGroup::kModule);
  } else {
    s.add(prefix + ".w1", uniform(rng, {in, hidden}, a1), ParamGroup::kModule);
    s.add(prefix + ".b1", Tensor(diff::Shape{hidden}, 0.0), ParamGroup::kModule);
    s.add(prefix + ".w2", uniform(rng, {hidden, in}, a2), ParamGroup::kModule);
  }
  s.add(prefix + ".b2", Tensor(diff::Shape{in}, 0.0), ParamGroup::kModule);
}

Var ffn(Binder& b, const std::string& prefix, Var x) {
  Var h = diff::gelu(diff::affine(x, b(prefix + ".w1"), b(prefix + ".b1")));
  return diff::affine(h, b(prefix + ".w2"), b(prefix + ".b2"));
}

Var attention_impl(Var q, Var kv, Var wq, Var wkv, std::size_t heads, std::vector<Tensor>* weights) {
  const auto& qs = q.shape();
  const auto& ks = kv.shape();
  if (qs.size() != 2 || ks.size() != 2 || qs[1] != ks[1]) {
    throw diff::ShapeError("cross_attention: query " + diff::shape_string(qs) + " vs key/value " +
                           diff::shape_string(ks));
  }
  Var qp = diff::matmul(q, wq);
  Var kp = diff::matmul(kv, wkv);
  const std::size_t d = qp.shape()[1];
  if (heads == 0 || d % heads != 0 || kp.shape()[1] != d) {
    throw diff::ShapeError("cross_attention: projected width " + std::to_string(d) + " does not split into " +
                           std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? qp : diff::slice_cols(qp, h * dk, dk);
    Var kh = heads == 1 ? kp : diff::slice_cols(kp, h * dk, dk);
    Var a = diff::softmax(diff::scale(diff::matmul(qh, diff::transpose(kh)), inv));
    if (weights) weights->push_back(a.value());
    outs.push_back(diff::matmul(a, kh));
  }
  return heads == 1 ? outs[0] : diff::concat_cols(outs);
}

Var unit(Var v) { return diff::div_scalar(v, diff::add_scalar(diff::l2_norm(v), 1e-12)); }

}  // namespace

void init_tride(const TriDeConfig& c, ParamStore& s) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  const std::size_t D = c.dim;
  add_ffn(s, "tride.ffn1", c.d_model, c.ffn_hidden, c.init, rng);
  const double ap = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  s.add("tride.proj.w", c.init == InitScheme::kIdentity ? eye(c.d_model, D) : uniform(rng, {c.d_model, D}, ap),
        ParamGroup::kModule);
  s.add("tride.proj.b", Tensor(diff::Shape{D}, 0.0), ParamGroup::kModule);
  s.add("tride.ln1.g", Tensor(diff::Shape{D}, 1.0), ParamGroup::kModule);
  s.add("tride.ln1.b", Tensor(diff::Shape{D}, 0.0), ParamGroup::kModule);
  const Tensor base = gaussian(rng, {c.slots, D}, 1.0);
  const double ad = 1.0 / std::sqrt(static_cast<double>(D));
  for (int k = 0; k < c.components; ++k) {
    const Tensor rot = rotation(rng, D);
    if (c.init == InitScheme::kIdentity) {
      s.add(comp_key(k, "v"), matmul_values(base, rot), ParamGroup::kModule);
      s.add(comp_key(k, "wq"), eye(D, D), ParamGroup::kModule);
      // Self-attention has no learnable vectors to tell components apart, so
      // its shared projection starts at the component's rotation instead.
      s.add(comp_key(k, "wkv"), c.attention == AttentionVariant::kSelf ? rot : eye(D, D), ParamGroup::kModule);
    } else {
      s.add(comp_key(k, "v"), uniform(rng, {c.slots, D}, std::sqrt(3.0)), ParamGroup::kModule);
      s.add(comp_key(k, "wq"), uniform(rng, {D, D}, ad), ParamGroup::kModule);
      s.add(comp_key(k, "wkv"), uniform(rng, {D, D}, ad), ParamGroup::kModule);
    }
  }
  s.add("tride.ln2.g", Tensor(diff::Shape{D}, 1.0), ParamGroup::kModule);
  s.add("tride.ln2.b", Tensor(diff::Shape{D}, 0.0), ParamGroup::kModule);
  add_ffn(s, "tride.ffn2", D, c.ffn_hidden, c.init, rng);
}

Var cross_attention(Var q, Var kv, Var wq, Var wkv, std::size_t heads) {
  return attention_impl(q, kv, wq, wkv, heads, nullptr);
}

AttentionResult cross_attention(const Tensor& q, const Tensor& kv, const Tensor& wq, const Tensor& wkv,
                                std::size_t heads) {
  Graph g;
  AttentionResult r;
  r.output = attention_impl(g.constant(q), g.constant(kv), g.constant(wq), g.constant(wkv), heads, &r.weights).value();
  return r;
}

TriDeOutput tride_forward(Binder& b, const TriDeConfig& c, Var x) {
  if (x.shape().size() != 2 || x.shape()[1] != c.d_model) {
    throw diff::ShapeError("tride_forward: input " + diff::shape_string(x.shape()) + ", expected [T," +
                           std::to_string(c.d_model) + "]");
  }
  Var mixed = diff::add(x, ffn(b, "tride.ffn1", x));
  Var xhat = diff::layer_norm(diff::affine(mixed, b("tride.proj.w"), b("tride.proj.b")), b("tride.ln1.g"),
                              b("tride.ln1.b"), c.ln_eps);
  Var base = c.placement == Placement::kAfterPooling ? diff::as_matrix(diff::mean_rows(xhat)) : xhat;
  TriDeOutput out;
  Var s = base;
  for (int k = 0; k < c.active_components(); ++k) {
    Var wq = b(comp_key(k, "wq"));
    Var wkv = b(comp_key(k, "wkv"));
    Var tokens;
    Var contribution;
    switch (c.attention) {
      case AttentionVariant::kLearnableKeyValue:
        tokens = contribution = cross_attention(base, b(comp_key(k, "v")), wq, wkv, c.heads);
        break;
      case AttentionVariant::kLearnableQuery:
        // Slots query the text; their mean is broadcast back over tokens.
        tokens = cross_attention(b(comp_key(k, "v")), base, wq, wkv, c.heads);
        contribution = diff::mean_rows(tokens);
        break;
      case AttentionVariant::kSelf:
        tokens = contribution = cross_attention(base, base, wq, wkv, c.heads);
        break;
    }
    s = diff::add(s, contribution);
    out.components.tokens.push_back(tokens);
    out.components.pooled.push_back(unit(diff::mean_rows(tokens)));
  }
  Var normed = diff::layer_norm(s, b("tride.ln2.g"), b("tride.ln2.b"), c.ln_eps);
  out.embedding = diff::mean_rows(diff::add(s, ffn(b, "tride.ffn2", normed)));
  return out;
}

TriDeLossParts tride_loss(Graph& g, std::span<const ChainComponents> batch, const TriDeLossOptions& o) {
  Var zero = g.constant(Tensor::scalar(0.0));
  TriDeLossParts parts{zero, zero, zero};
  if (batch.empty()) return parts;

  Var orth = zero;
  std::size_t sentences = 0;
  Var margin = zero;
  auto dist = [&](Var a, Var b) {
    Var cs = diff::dot(a, b);
    return o.cosine_distance ? diff::add_scalar(diff::neg(cs), 1.0) : cs;
  };
  for (const auto& chain : batch) {
    const std::size_t l = chain.pos.size();
    if (l == 0 || chain.neg.size() != l) throw std::invalid_argument("tride_loss: chain needs pos/neg per tier");
    std::size_t k = 0;
    for (std::size_t t = 0; t < l; ++t) k = std::max({k, chain.pos[t].count(), chain.neg[t].count()});
    for (std::size_t t = 0; t < l; ++t) {
      for (const ComponentTriple* tr : {&chain.pos[t], &chain.neg[t]}) {
        if (tr->count() != k) {
          throw std::invalid_argument("tride_loss: tier " + std::to_string(t) + " lacks component " +
                                      kComponentNames[tr->count()]);
        }
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = i + 1; j < k; ++j) orth = diff::add(orth, diff::abs(diff::dot(tr->pooled[i], tr->pooled[j])));
        ++sentences;
      }
    }
    if (k == 0) continue;
    auto term = [&](std::size_t comp, std::size_t t) {
      Var pos = chain.pos[t].pooled[comp];
      Var raw = diff::sub(diff::add_scalar(dist(pos, chain.pos[t + 1].pooled[comp]), o.margin),
                          dist(pos, chain.neg[t].pooled[comp]));
      return diff::relu(raw);
    };
    for (std::size_t t = 0; t + 1 < l; ++t) margin = diff::add(margin, term(0, t));
    if (k >= 2) {
      for (std::size_t t = 1; t + 1 < l; ++t) margin = diff::add(margin, term(1, t));
    }
    if (k >= 3) {
      Var raw = diff::add_scalar(diff::neg(dist(chain.pos[l - 1].pooled[2], chain.neg[l - 1].pooled[2])), o.margin);
      margin = diff::add(margin, diff::relu(raw));
    }
  }
  parts.orthogonality = diff::scale(orth, o.lambda / static_cast<double>(sentences));
  parts.margin = diff::scale(margin, 1.0 / static_cast<double>(batch.size()));
  parts.total = diff::add(parts.orthogonality, parts.margin);
  return parts;
}

}  // namespace tase::tride
