#include <cmath>
#include <random>

#include "doctest.h"
#include "tase/diff/ops.h"
#include "tase/tride/encoder.h"
#include "tase/tride/lora.h"
#include "tase/tride/tride.h"

using namespace tase;
using namespace tase::tride;
using diff::Graph;
using diff::Shape;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Tensor rand_t(std::mt19937_64& rng, Shape s) { return diff::random_tensor(rng, std::move(s), -1.0, 1.0); }

Vocabulary small_vocab() { return Vocabulary({"segway", "red", "woman", "with", "dark", "hair", "middle", "man"}); }

struct Model {
  ParamStore store;
  TriDeConfig tc;
  std::unique_ptr<EncoderStub> enc;

  explicit Model(TriDeConfig c = {}, EncoderConfig ec = {}) : tc(c) {
    ec.d_model = c.d_model;
    enc = std::make_unique<EncoderStub>(small_vocab(), ec, store);
    init_tride(tc, store);
  }

  Tensor embed(const std::string& caption) {
    Graph g;
    Binder b(g, store);
    return tride_forward(b, tc, enc->encode(b, caption)).embedding.value();
  }
};

}  // namespace

TEST_CASE("vocabulary and tokenization") {
  Vocabulary v = small_vocab();
  CHECK(v.id(kUnkToken) == v.unk_id());
  CHECK(v.id(kRootToken) == v.root_id());
  CHECK(v.id("zebra") == v.unk_id());
  CHECK(v.tokenize("red  segway") == std::vector<int>{v.id("red"), v.id("segway")});
  CHECK_THROWS_AS(v.tokenize("   "), std::invalid_argument);
  std::stringstream ss;
  v.save(ss);
  Vocabulary back = Vocabulary::load(ss);
  CHECK(back.tokens() == v.tokens());
}

TEST_CASE("encode") {
  ParamStore store;
  EncoderConfig ec;
  ec.d_model = 16;
  EncoderStub enc(small_vocab(), ec, store);
  SUBCASE("single token shape") {
    Tensor x = enc.encode(store, "segway");
    CHECK(x.shape() == Shape{1, 16});
  }
  SUBCASE("deterministic") {
    Tensor a = enc.encode(store, "middle woman with dark hair");
    Tensor b = enc.encode(store, "middle woman with dark hair");
    CHECK(a.shape() == Shape{5, 16});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("empty caption") { CHECK_THROWS_AS(enc.encode(store, ""), std::invalid_argument); }
  SUBCASE("out-of-vocabulary word uses the unk row") {
    ParamStore plain_store;
    EncoderConfig pc = ec;
    pc.self_attention = false;
    EncoderStub plain(small_vocab(), pc, plain_store);
    Tensor x = plain.encode(plain_store, "red zebra");
    const Tensor& table = plain_store.at("encoder.table");
    const auto pe = plain.position_code(1);
    for (std::size_t j = 0; j < 16; ++j) CHECK(x.at(1, j) == table.at(0, j) + pe[j]);
    CHECK(enc.vocab().tokenize("red zebra")[1] == enc.vocab().unk_id());
  }
}

TEST_CASE("lora_apply") {
  std::mt19937_64 rng(1);
  const Tensor w = rand_t(rng, {6, 5});
  const Tensor x = rand_t(rng, {3, 6});
  SUBCASE("zero up is the base projection") {
    LoraAdapter a = make_lora(6, 5, 4, 4.0, "q", rng);
    Tensor y = lora_apply(a, w, x);
    Mat base = mm(to_mat(x), to_mat(w));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(y.at(i, j) == base[i][j]);
  }
  SUBCASE("full-rank identity adapter adds x") {
    const Tensor sq = rand_t(rng, {4, 4});
    LoraAdapter a;
    a.down = Tensor(Shape{4, 4}, 0.0);
    a.up = Tensor(Shape{4, 4}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) a.down.at(i, i) = a.up.at(i, i) = 1.0;
    a.scale = 1.0;
    const Tensor v = rand_t(rng, {4});
    Tensor y = lora_apply(a, sq, v);
    for (std::size_t j = 0; j < 4; ++j) {
      double e = v[j];
      for (std::size_t i = 0; i < 4; ++i) e += v[i] * sq.at(i, j);
      CHECK(std::fabs(y[j] - e) < 1e-15);
    }
  }
  SUBCASE("rank-2 adapter matches the dense sum") {
    LoraAdapter a = make_lora(6, 5, 2, 3.0, "v", rng);
    a.up = rand_t(rng, {2, 5});
    Mat dense = to_mat(w);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t k = 0; k < 2; ++k) dense[i][j] += 1.5 * a.down.at(i, k) * a.up.at(k, j);
    Mat ref = mm(to_mat(x), dense);
    Tensor y = lora_apply(a, w, x);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::fabs(y.at(i, j) - ref[i][j]) < 1e-12);
    Tensor eff = lora_effective_weight(a, w);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::fabs(eff.at(i, j) - dense[i][j]) < 1e-14);
  }
  SUBCASE("shape mismatch") {
    LoraAdapter a = make_lora(5, 5, 2, 2.0, "q", rng);
    CHECK_THROWS_AS(lora_apply(a, w, x), diff::ShapeError);
  }
}

TEST_CASE("cross_attention") {
  std::mt19937_64 rng(2);
  SUBCASE("singleton key returns the projected value row") {
    const Tensor q = rand_t(rng, {1, 4}), kv = rand_t(rng, {1, 4});
    const Tensor wq = rand_t(rng, {4, 4}), wkv = rand_t(rng, {4, 4});
    auto r = cross_attention(q, kv, wq, wkv, 2);
    Mat proj = mm(to_mat(kv), to_mat(wkv));
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::fabs(r.output.at(0, j) - proj[0][j]) < 1e-15);
  }
  SUBCASE("rows are stochastic") {
    auto r = cross_attention(rand_t(rng, {5, 8}), rand_t(rng, {7, 8}), rand_t(rng, {8, 8}), rand_t(rng, {8, 8}), 4);
    REQUIRE(r.weights.size() == 4);
    for (const auto& w : r.weights) {
      for (std::size_t i = 0; i < w.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) s += w.at(i, j);
        CHECK(std::fabs(s - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("matches a loop reference") {
    const Tensor q = rand_t(rng, {4, 8}), kv = rand_t(rng, {4, 8});
    const Tensor wq = rand_t(rng, {8, 8}), wkv = rand_t(rng, {8, 8});
    auto r = cross_attention(q, kv, wq, wkv, 2);
    Mat Q = mm(to_mat(q), to_mat(wq)), K = mm(to_mat(kv), to_mat(wkv));
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> s(4);
        double mx = -1e300;
        for (std::size_t j = 0; j < 4; ++j) {
          s[j] = 0.0;
          for (std::size_t c = 0; c < 4; ++c) s[j] += Q[i][h * 4 + c] * K[j][h * 4 + c];
          s[j] /= 2.0;
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& v : s) z += (v = std::exp(v - mx));
        for (std::size_t c = 0; c < 4; ++c) {
          double o = 0.0;
          for (std::size_t j = 0; j < 4; ++j) o += s[j] / z * K[j][h * 4 + c];
          CHECK(std::fabs(r.output.at(i, h * 4 + c) - o) < 1e-10);
        }
      }
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(cross_attention(rand_t(rng, {2, 4}), rand_t(rng, {2, 5}), rand_t(rng, {4, 4}), rand_t(rng, {4, 4}), 2),
                    diff::ShapeError);
  }
}

TEST_CASE("tride_forward shapes and variants") {
  for (Placement p : {Placement::kNone, Placement::kTokenLevel, Placement::kAfterPooling}) {
    for (AttentionVariant a :
         {AttentionVariant::kSelf, AttentionVariant::kLearnableQuery, AttentionVariant::kLearnableKeyValue}) {
      for (int k = 1; k <= 3; ++k) {
        TriDeConfig c;
        c.d_model = 12;
        c.dim = 8;
        c.placement = p;
        c.attention = a;
        c.components = k;
        Model m(c);
        Graph g;
        Binder b(g, m.store);
        auto out = tride_forward(b, c, m.enc->encode(b, "middle woman with dark hair"));
        CHECK(out.embedding.shape() == Shape{8});
        CHECK(out.components.count() == static_cast<std::size_t>(c.active_components()));
        for (Var pv : out.components.pooled) {
          double n = 0.0;
          for (double v : pv.value().values()) n += v * v;
          CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-9);
        }
        CHECK(out.embedding.value().all_finite());
      }
    }
  }
  TriDeConfig bad;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zeroed FFN and attention weights reduce to pooled projection") {
  TriDeConfig c;
  c.d_model = 10;
  c.dim = 6;
  Model m(c);
  for (const auto& n : m.store.names()) {
    const bool ffn = n.find("ffn") != std::string::npos;
    const bool attn = n.find(".wq_") != std::string::npos || n.find(".wkv_") != std::string::npos;
    if (ffn || attn) {
      for (double& v : m.store.at(n).values()) v = 0.0;
    }
  }
  std::mt19937_64 rng(3);
  m.store.at("tride.proj.w") = rand_t(rng, {10, 6});
  m.store.at("tride.proj.b") = rand_t(rng, {6});
  m.store.at("tride.ln1.g") = rand_t(rng, {6});
  m.store.at("tride.ln1.b") = rand_t(rng, {6});
  const std::string caption = "red woman with dark hair";
  const Tensor x = m.enc->encode(m.store, caption);
  Mat h = mm(to_mat(x), to_mat(m.store.at("tride.proj.w")));
  std::vector<double> expect(6, 0.0);
  for (auto& row : h) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mu += (row[j] += m.store.at("tride.proj.b")[j]);
    mu /= 6.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= 6.0;
    for (std::size_t j = 0; j < 6; ++j) {
      const double y = (row[j] - mu) / std::sqrt(var + 1e-5) * m.store.at("tride.ln1.g")[j] + m.store.at("tride.ln1.b")[j];
      expect[j] += y / static_cast<double>(h.size());
    }
  }
  const Tensor e = m.embed(caption);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::fabs(e[j] - expect[j]) < 1e-12);
}

TEST_CASE("zero-initialized adapters are exact no-ops") {
  TriDeConfig c;
  EncoderConfig with, without;
  without.adapters = false;
  Model a(c, with), b(c, without);
  for (const char* cap : {"woman", "middle woman with dark hair", "red segway"}) {
    const Tensor ea = a.embed(cap), eb = b.embed(cap);
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i] == eb[i]);
  }
  CHECK(a.store.count(ParamGroup::kAdapter) == 2 * 2 * 32 * 16);
}

namespace {

ComponentTriple unit_triple(Graph& g, std::mt19937_64& rng, std::size_t d, int k) {
  ComponentTriple t;
  for (int c = 0; c < k; ++c) {
    Tensor v = rand_t(rng, {d});
    double n = 0.0;
    for (double x : v.values()) n += x * x;
    for (double& x : v.values()) x /= std::sqrt(n);
    t.pooled.push_back(g.constant(v));
    t.tokens.push_back(g.constant(v));
  }
  return t;
}

double dotv(Var a, Var b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  return s;
}

double oracle_loss(const std::vector<ChainComponents>& batch, const TriDeLossOptions& o) {
  double orth = 0.0;
  int sentences = 0;
  double margin = 0.0;
  auto d = [&](Var a, Var b) { return o.cosine_distance ? 1.0 - dotv(a, b) : dotv(a, b); };
  for (const auto& ch : batch) {
    const std::size_t l = ch.pos.size();
    for (std::size_t t = 0; t < l; ++t) {
      for (const auto* tr : {&ch.pos[t], &ch.neg[t]}) {
        const auto& p = tr->pooled;
        for (std::size_t i = 0; i < p.size(); ++i)
          for (std::size_t j = i + 1; j < p.size(); ++j) orth += std::fabs(dotv(p[i], p[j]));
        ++sentences;
      }
    }
    const std::size_t k = ch.pos[0].count();
    for (std::size_t t = 0; t + 1 < l; ++t) {
      margin += std::max(0.0, o.margin + d(ch.pos[t].pooled[0], ch.pos[t + 1].pooled[0]) -
                                  d(ch.pos[t].pooled[0], ch.neg[t].pooled[0]));
      if (k >= 2 && t >= 1) {
        margin += std::max(0.0, o.margin + d(ch.pos[t].pooled[1], ch.pos[t + 1].pooled[1]) -
                                    d(ch.pos[t].pooled[1], ch.neg[t].pooled[1]));
      }
    }
    if (k >= 3) margin += std::max(0.0, o.margin - d(ch.pos[l - 1].pooled[2], ch.neg[l - 1].pooled[2]));
  }
  return o.lambda * orth / sentences + margin / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("tride_loss") {
  Graph g;
  SUBCASE("all hinges inactive and orthogonal components") {
    auto e = [&](std::size_t i) {
      Tensor v(Shape{6}, 0.0);
      v[i] = 1.0;
      return g.constant(v);
    };
    ComponentTriple pos{{}, {e(0), e(1), e(2)}};
    ComponentTriple neg{{}, {e(3), e(4), e(5)}};
    std::vector<ChainComponents> batch{ChainComponents{{pos, pos, pos}, {neg, neg, neg}}};
    auto parts = tride_loss(g, batch, {});
    CHECK(parts.orthogonality.item() == 0.0);
    CHECK(parts.margin.item() == 0.0);
    CHECK(parts.total.item() == 0.0);
  }
  SUBCASE("identical object and attribute vectors") {
    std::mt19937_64 rng(4);
    ComponentTriple t = unit_triple(g, rng, 6, 3);
    t.pooled[1] = t.pooled[0];
    ChainComponents ch{{t, t, t}, {t, t, t}};
    std::vector<ChainComponents> batch{ch};
    TriDeLossOptions o;
    o.lambda = 0.1;
    auto parts = tride_loss(g, batch, o);
    const double expect = 0.1 * (1.0 + 2.0 * std::fabs(dotv(t.pooled[0], t.pooled[2])));
    CHECK(std::fabs(parts.orthogonality.item() - expect) < 1e-12);
    CHECK(parts.orthogonality.item() >= 0.1);
  }
  SUBCASE("random batches match a loop oracle") {
    std::mt19937_64 rng(5);
    for (int k = 1; k <= 3; ++k) {
      for (bool distance : {true, false}) {
        std::vector<ChainComponents> batch;
        for (int c = 0; c < 4; ++c) {
          ChainComponents ch;
          for (int t = 0; t < 3; ++t) {
            ch.pos.push_back(unit_triple(g, rng, 5, k));
            ch.neg.push_back(unit_triple(g, rng, 5, k));
          }
          batch.push_back(ch);
        }
        TriDeLossOptions o;
        o.cosine_distance = distance;
        o.margin = 0.3;
        CHECK(std::fabs(tride_loss(g, batch, o).total.item() - oracle_loss(batch, o)) < 1e-12);
      }
    }
  }
  SUBCASE("missing component") {
    std::mt19937_64 rng(6);
    ChainComponents ch;
    for (int t = 0; t < 3; ++t) {
      ch.pos.push_back(unit_triple(g, rng, 5, 3));
      ch.neg.push_back(unit_triple(g, rng, 5, t == 2 ? 2 : 3));
    }
    std::vector<ChainComponents> batch{ch};
    CHECK_THROWS_AS(tride_loss(g, batch, {}), std::invalid_argument);
  }
}

TEST_CASE("gradients of tride_forward and tride_loss match finite differences") {
  TriDeConfig c;
  c.d_model = 8;
  c.dim = 8;
  c.ffn_hidden = 6;
  c.slots = 3;
  EncoderConfig ec;
  ec.lora_rank = 2;
  ec.lora_alpha = 2.0;
  Model m(c, ec);
  std::mt19937_64 rng(7);
  for (const auto& n : m.store.names()) {
    if (m.store.group(n) == ParamGroup::kAdapter) m.store.at(n) = rand_t(rng, m.store.at(n).shape());
  }
  std::vector<std::string> names;
  for (const auto& n : m.store.names()) {
    if (m.store.group(n) != ParamGroup::kFrozen) names.push_back(n);
  }
  const std::vector<std::string> captions{"middle woman", "middle woman with dark hair", "red man",
                                          "woman",        "man with dark hair",          "red woman"};
  auto forward = [&](Binder& b) { return tride_forward(b, c, m.enc->encode(b, captions[1])).embedding; };
  auto loss = [&](Binder& b) {
    ChainComponents ch;
    for (int t = 0; t < 3; ++t) {
      ch.pos.push_back(tride_forward(b, c, m.enc->encode(b, captions[t == 0 ? 3 : t - 1])).components);
      ch.neg.push_back(tride_forward(b, c, m.enc->encode(b, captions[3 + (t + 1) % 3])).components);
    }
    std::vector<ChainComponents> batch{ch};
    TriDeLossOptions o;
    o.margin = 2.5;  // keep every hinge active
    return tride_loss(b.graph(), batch, o).total;
  };
  diff::GradCheckOptions opt;
  opt.max_coords_per_input = 6;
  auto fr = grad_check_params("tride_forward", m.store, names, forward, opt);
  auto lr = grad_check_params("tride_loss", m.store, names, loss, opt);
  CHECK(fr.max_rel_error < 1e-4);
  CHECK(lr.max_rel_error < 1e-4);
  CHECK(fr.inputs.size() == names.size());
}
