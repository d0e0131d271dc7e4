#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "tase/diff/ops.h"
#include "tase/grounder/eval.h"
#include "tase/grounder/train.h"

using namespace tase;
using namespace tase::grounder;
using diff::Graph;
using diff::Tensor;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

hivg::Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng), y = u(rng);
  return {x, y, x + 0.05 + u(rng), y + 0.05 + u(rng)};
}

// Brute-force geometry on a fine grid is too slow; the oracle below works
// from the closed-form areas by hand.
double giou_oracle(const hivg::Box& a, const hivg::Box& b) {
  double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (ix < 0) ix = 0;
  if (iy < 0) iy = 0;
  const double inter = ix * iy;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0), area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  const double ex = std::max(a.x1, b.x1) - std::min(a.x0, b.x0), ey = std::max(a.y1, b.y1) - std::min(a.y0, b.y0);
  return inter / uni - (ex * ey - uni) / (ex * ey);
}

hivg::Corpus small_corpus(std::uint64_t seed, int scenes) {
  hivg::GenConfig g;
  g.seed = seed;
  g.scenes = scenes;
  return hivg::generate_corpus(g);
}

ModelConfig small_model() {
  ModelConfig m;
  m.encoder.d_model = m.tride.d_model = m.tride.dim = m.vision.dim = 8;
  m.encoder.lora_rank = 2;
  m.encoder.lora_alpha = 2;
  m.tride.ffn_hidden = 8;
  m.tride.slots = 2;
  m.fusion_hidden = 8;
  return m;
}

}  // namespace

TEST_CASE("proposal features") {
  const auto c = small_corpus(1, 3);
  VisionEncoder v(VisionConfig{});
  const auto& s = c.scenes[0];
  SUBCASE("noise-free features equal description embeddings") {
    const auto ps = proposal_features(s, v, 0.0, 5);
    REQUIRE(ps.size() == s.objects.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      CHECK(ps[i].feature == v.describe(s.objects[i]));
      CHECK(ps[i].box == s.objects[i].box);
      CHECK(*ps[i].source_object_id == s.objects[i].id);
    }
  }
  SUBCASE("identical objects have identical features") {
    hivg::SceneObject a = s.objects[0], b = s.objects[0];
    b.id = 99;
    b.box = {0.0, 0.0, 0.1, 0.1};
    CHECK(v.describe(a) == v.describe(b));
  }
  SUBCASE("noise has the requested standard deviation") {
    const auto clean = v.describe(s.objects[0]);
    std::vector<double> sum(clean.size()), sq(clean.size());
    const int n = 1000;
    for (int k = 0; k < n; ++k) {
      const auto f = proposal_features(s, v, 0.1, static_cast<std::uint64_t>(k))[0].feature;
      for (std::size_t j = 0; j < f.size(); ++j) {
        sum[j] += f[j] - clean[j];
        sq[j] += (f[j] - clean[j]) * (f[j] - clean[j]);
      }
    }
    for (std::size_t j = 0; j < clean.size(); ++j) {
      const double mean = sum[j] / n;
      const double sd = std::sqrt(sq[j] / n - mean * mean);
      CHECK(sd >= 0.09);
      CHECK(sd <= 0.11);
    }
  }
  SUBCASE("deterministic per seed and valid boxes under jitter") {
    const auto a = proposal_features(s, v, 0.1, 9, 0.1), b = proposal_features(s, v, 0.1, 9, 0.1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].feature == b[i].feature);
      CHECK(a[i].box == b[i].box);
      CHECK(a[i].box.area() > 0.0);
    }
    CHECK_THROWS_AS(proposal_features(s, v, -1.0, 1), std::invalid_argument);
  }
}

TEST_CASE("score") {
  std::mt19937_64 rng(1);
  const auto q = random_vec(rng, 6);
  SUBCASE("the query itself scores highest") {
    std::vector<std::vector<double>> f{random_vec(rng, 6), q, random_vec(rng, 6), random_vec(rng, 6)};
    const auto r = score(q, f, 0.07);
    CHECK(std::max_element(r.probabilities.begin(), r.probabilities.end()) - r.probabilities.begin() == 1);
  }
  SUBCASE("orthogonal feature gives logit 0 and probability 0.5") {
    const auto r = score(std::vector<double>{1, 0}, {{0, 3}}, 0.07);
    CHECK(r.logits[0] == 0.0);
    CHECK(r.probabilities[0] == 0.5);
  }
  SUBCASE("graph and value forms match a loop oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<double>> f;
      for (int i = 0; i < 5; ++i) f.push_back(random_vec(rng, 6));
      const auto r = score(q, f, 0.07);
      Graph g;
      Tensor fm(diff::Shape{5, 6});
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) fm.at(i, j) = f[i][j];
      const Tensor& z = score_logits(g.constant(Tensor::vector(q)), g.constant(fm), 0.07).value();
      for (std::size_t i = 0; i < 5; ++i) {
        double d = 0, nq = 0, nf = 0;
        for (std::size_t j = 0; j < 6; ++j) {
          d += q[j] * f[i][j];
          nq += q[j] * q[j];
          nf += f[i][j] * f[i][j];
        }
        const double oracle = d / std::sqrt(nq) / std::sqrt(nf) / 0.07;
        CHECK(std::fabs(r.logits[i] - oracle) < 1e-12);
        CHECK(std::fabs(z[i] - oracle) < 1e-12);
        CHECK(std::fabs(r.probabilities[i] - 1.0 / (1.0 + std::exp(-oracle))) < 1e-12);
      }
    }
  }
  SUBCASE("ranking ignores uniform feature scaling") {
    std::vector<std::vector<double>> f, g2;
    for (int i = 0; i < 8; ++i) f.push_back(random_vec(rng, 6));
    for (auto v : f) {
      for (double& x : v) x *= 3.7;
      g2.push_back(v);
    }
    const auto a = score(q, f, 0.07), b = score(q, g2, 0.07);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK((a.logits[i] < a.logits[j]) == (b.logits[i] < b.logits[j]));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(score(q, {{1.0, 2.0}}, 0.07), diff::ShapeError);
  }
}

TEST_CASE("focal loss") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  SUBCASE("hand case") {
    const double p[] = {0.5}, y[] = {1.0};
    CHECK(std::fabs(focal_loss(p, y, 2.0, 0.25) - 0.25 * 0.25 * std::log(2.0)) < 1e-12);
  }
  SUBCASE("gamma 0 alpha 1 is binary cross-entropy") {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> p(7), y(7);
      double bce = 0.0;
      for (int i = 0; i < 7; ++i) {
        p[i] = u(rng);
        y[i] = u(rng) < 0.5 ? 1.0 : 0.0;
        bce += -(y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]));
      }
      CHECK(std::fabs(focal_loss(p, y, 0.0, 1.0) - bce / 7) < 1e-12);
    }
  }
  SUBCASE("confident correct predictions cost nothing") {
    const double p[] = {1 - 1e-9, 1e-9}, y[] = {1.0, 0.0};
    CHECK(focal_loss(p, y) < 1e-20);
  }
  SUBCASE("graph form from logits equals the value form") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> z = random_vec(rng, 9), p, y;
      for (double v : z) {
        p.push_back(1.0 / (1.0 + std::exp(-v)));
        y.push_back(u(rng) < 0.3 ? 1.0 : 0.0);
      }
      Graph g;
      CHECK(std::fabs(focal_loss_logits(g.constant(Tensor::vector(z)), y).item() - focal_loss(p, y)) < 1e-12);
    }
  }
  SUBCASE("probability outside (0, 1)") {
    const double p[] = {1.0}, y[] = {1.0};
    CHECK_THROWS_AS(focal_loss(p, y), std::domain_error);
  }
}

TEST_CASE("box losses") {
  std::mt19937_64 rng(3);
  SUBCASE("giou hand case") {
    CHECK(std::fabs(giou_loss(hivg::Box{0, 0, 1, 1}, hivg::Box{2, 2, 3, 3}) - 16.0 / 9.0) < 1e-12);
  }
  SUBCASE("identical boxes") {
    const hivg::Box b{0.1, 0.2, 0.4, 0.9};
    CHECK(giou_loss(b, b) == 0.0);
    CHECK(l1_box_loss(b, b) == 0.0);
  }
  SUBCASE("nested box") {
    const hivg::Box outer{0, 0, 2, 2}, inner{0.5, 0.5, 1.5, 1.5};
    CHECK(std::fabs(giou_loss(inner, outer) - (1.0 - 0.25)) < 1e-12);
  }
  SUBCASE("unit shift in one coordinate") { CHECK(l1_box_loss(hivg::Box{0, 0, 1, 1}, hivg::Box{1, 0, 1, 1}) == 0.25); }
  SUBCASE("random boxes: bounds, symmetry and oracles") {
    for (int trial = 0; trial < 1000; ++trial) {
      const auto a = random_box(rng), b = random_box(rng);
      const double l = giou_loss(a, b);
      CHECK(l >= 0.0);
      CHECK(l <= 2.0);
      CHECK(std::fabs(l - giou_loss(b, a)) < 1e-12);
      CHECK(std::fabs(l - (1.0 - giou_oracle(a, b))) < 1e-12);
      const double l1 =
          (std::fabs(a.x0 - b.x0) + std::fabs(a.y0 - b.y0) + std::fabs(a.x1 - b.x1) + std::fabs(a.y1 - b.y1)) / 4;
      CHECK(std::fabs(l1_box_loss(a, b) - l1) < 1e-12);
      Graph g;
      const BoxVars v = box_vars(g.constant(Tensor::vector({a.x0, a.y0, a.x1, a.y1})));
      CHECK(std::fabs(giou_loss(v, b).item() - l) < 1e-12);
      CHECK(std::fabs(l1_box_loss(v, b).item() - l1) < 1e-12);
    }
  }
  SUBCASE("degenerate box") {
    CHECK_THROWS_AS(giou_loss(hivg::Box{0, 0, 0, 1}, hivg::Box{0, 0, 1, 1}), DegenerateBoxError);
  }
}

TEST_CASE("contrastive baseline") {
  std::mt19937_64 rng(4);
  SUBCASE("equal similarities give ln N") {
    const std::vector<double> q{1, 0};
    CHECK(std::fabs(contrastive_baseline(q, {{1, 1}}, {{1, -1}, {2, 2}, {3, -3}}, 0.5) - std::log(4.0)) < 1e-12);
  }
  SUBCASE("identical positive and orthogonal negatives at small tau") {
    const std::vector<double> q{1, 0, 0};
    CHECK(contrastive_baseline(q, {q}, {{0, 1, 0}, {0, 0, 1}}, 0.01) < 1e-40);
  }
  SUBCASE("loop oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto q = random_vec(rng, 5);
      std::vector<std::vector<double>> pos{random_vec(rng, 5), random_vec(rng, 5)}, neg{random_vec(rng, 5)};
      auto cs = [&](const std::vector<double>& a) {
        double d = 0, na = 0, nq = 0;
        for (int i = 0; i < 5; ++i) {
          d += a[i] * q[i];
          na += a[i] * a[i];
          nq += q[i] * q[i];
        }
        return d / std::sqrt(na * nq);
      };
      double oracle = 0.0;
      for (const auto& p : pos) {
        const double sp = std::exp(cs(p) / 0.2);
        oracle += -std::log(sp / (sp + std::exp(cs(neg[0]) / 0.2)));
      }
      oracle /= 2;
      CHECK(std::fabs(contrastive_baseline(q, pos, neg, 0.2) - oracle) < 1e-12);
    }
  }
  SUBCASE("empty sets") {
    const std::vector<double> q{1, 0};
    CHECK_THROWS_AS(contrastive_baseline(q, {}, {{1, 0}}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(contrastive_baseline(q, {{1, 0}}, {}, 0.1), std::invalid_argument);
  }
}

TEST_CASE("total loss arithmetic") {
  LossWeights w;
  CHECK(total_loss(1, 1, 1, 1, w) == 16.0);
  CHECK(total_loss(0, 0, 0, 0, w) == 0.0);
}

TEST_CASE("batch loss itemizes every term and reaches every trainable group") {
  const auto corpus = small_corpus(3, 6);
  GroundingModel model(small_model());
  TrainConfig tc;
  tc.batch_chains = 3;
  Trainer tr(model, corpus, tc);
  const auto batch = tr.batch_at(0);
  for (LossMode mode : all_modes()) {
    tc.mode = mode;
    Graph g;
    Binder b(g, model.store());
    const BatchLoss l = batch_loss(model, b, batch, tc);
    const LossReport r = l.report();
    INFO(std::string(mode_name(mode)));
    CHECK(std::fabs(r.total - r.weighted(tc.weights)) < 1e-10);
    CHECK(std::fabs(r.tase - (r.tride + r.sentence_pos + r.sentence_neg)) < 1e-12);
    CHECK(std::fabs(r.tride - (r.orthogonality + r.margin)) < 1e-12);
    if (mode == LossMode::kBase) CHECK(r.sentence_pos == 0.0);
    if (mode == LossMode::kHNegOnly) CHECK(r.sentence_pos == 0.0);
    if (mode == LossMode::kHPosOnly || mode == LossMode::kCL || mode == LossMode::kRE) CHECK(r.sentence_neg == 0.0);
    g.backward(l.total);
    for (const char* name : {"encoder.lora_q.up", "tride.wq_o", "tride.ffn2.w1", "fusion.w2", "box.w"}) {
      const auto& t = model.store().at(name);
      double n = 0.0;
      if (t.has_grad())
        for (double v : t.grad()) n += v * v;
      INFO(std::string(name));
      CHECK(n > 0.0);
    }
    model.store().zero_grad();
  }
}

TEST_CASE("batch loss matches finite differences") {
  const auto corpus = small_corpus(4, 4);
  GroundingModel model(small_model());
  // Nonzero adapters and fusion output so every path carries gradient.
  std::mt19937_64 rng(6);
  for (const char* n : {"encoder.lora_q.up", "encoder.lora_v.up", "fusion.w2", "box.w"}) {
    for (double& v : model.store().at(n).values()) v = 0.1 * std::normal_distribution<double>(0, 1)(rng);
  }
  TrainConfig tc;
  tc.batch_chains = 2;
  Trainer tr(model, corpus, tc);
  const auto batch = tr.batch_at(0);
  const std::vector<std::string> names{"encoder.lora_q.down", "encoder.lora_v.up", "tride.wkv_o", "tride.v_a",
                                       "tride.ln2.g", "fusion.w1", "fusion.w2", "box.w", "box.b"};
  for (LossMode mode : all_modes()) {
    tc.mode = mode;
    diff::GradCheckOptions o;
    o.max_coords_per_input = 6;
    o.coord_seed = 3;
    const auto r = tride::grad_check_params(
        std::string("batch_loss/") + mode_name(mode), model.store(), names,
        [&](Binder& b) { return batch_loss(model, b, batch, tc).total; }, o);
    INFO(std::string(mode_name(mode)), " max rel error ", r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("average precision") {
  SUBCASE("perfect ranking") { CHECK(average_precision_11({{0.9, true}, {0.8, true}, {0.1, false}}, 2) == 1.0); }
  SUBCASE("missed ground truth caps recall") {
    // One of two found at rank 1: precision 1 up to recall 0.5.
    CHECK(std::fabs(average_precision_11({{0.9, true}, {0.5, false}}, 2) - 6.0 / 11.0) < 1e-12);
  }
  SUBCASE("random scorer tracks prevalence") {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0, 1);
      std::vector<std::pair<double, bool>> p;
      for (int i = 0; i < 2000; ++i) p.emplace_back(u(rng), i % 2 == 0);
      mean += average_precision_11(p, 1000) / 20;
    }
    CHECK(std::fabs(mean - 0.5) < 0.05);
  }
}

TEST_CASE("evaluation") {
  const auto eval = small_corpus(8, 30);
  VisionEncoder v(VisionConfig{});
  EvalOptions o;
  SUBCASE("oracle detector scores AP 1") {
    const Metrics m = evaluate(oracle_detector(), eval, v, o);
    CHECK(m.ap_c == 1.0);
    CHECK(m.ap_d == 1.0);
    CHECK(m.ap == 1.0);
    for (const auto& t : m.tiers) {
      CHECK(t.precision == 1.0);
      CHECK(t.recall == 1.0);
    }
    CHECK(m.queries == 6 * eval.chains.size());
  }
  SUBCASE("model evaluation is deterministic") {
    GroundingModel model(ModelConfig{});
    const Metrics a = evaluate(model, eval, o), b = evaluate(model, eval, o);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.csv() == b.csv());
    CHECK(a.angle_csv() == b.angle_csv());
    int total = 0;
    for (int c : a.angles.positive) total += c;
    CHECK(total == static_cast<int>(2 * eval.chains.size()));
  }
  SUBCASE("empty set") {
    CHECK_THROWS_AS(evaluate(oracle_detector(), hivg::Corpus{}, v, o), std::invalid_argument);
  }
}

TEST_CASE("training") {
  const auto corpus = small_corpus(9, 40);
  SUBCASE("root stays frozen and loss is logged") {
    GroundingModel model(ModelConfig{});
    const auto root = model.root();
    TrainConfig tc;
    tc.iterations = 5;
    tc.batch_chains = 2;
    Trainer tr(model, corpus, tc);
    int calls = 0;
    tr.run([&](int, const LossReport& r) {
      ++calls;
      CHECK(std::isfinite(r.total));
    });
    CHECK(calls == 5);
    CHECK(model.root() == root);
    const auto& stored = model.store().at("root");
    for (std::size_t i = 0; i < root.size(); ++i) CHECK(stored[i] == root[i]);
  }
  SUBCASE("resumed run matches an unbroken run") {
    TrainConfig tc;
    tc.iterations = 6;
    tc.batch_chains = 2;
    GroundingModel a(ModelConfig{});
    Trainer ta(a, corpus, tc);
    ta.run();

    GroundingModel b(ModelConfig{});
    Trainer tb(b, corpus, tc);
    for (int i = 0; i < 3; ++i) tb.step();
    const auto params = b.store().to_json();
    const auto state = nlohmann::json::parse(tb.optimizer_state().dump());
    GroundingModel c(ModelConfig{});
    c.store().load_json(nlohmann::json::parse(params.dump()));
    Trainer tcn(c, corpus, tc);
    tcn.load_state(3, state);
    tcn.run();
    CHECK(c.store().to_json() == a.store().to_json());
  }
  SUBCASE("non-finite loss aborts with the step") {
    GroundingModel model(ModelConfig{});
    model.store().at("fusion.b2")[0] = std::nan("");
    TrainConfig tc;
    tc.batch_chains = 2;
    Trainer tr(model, corpus, tc);
    try {
      tr.step();
      FAIL("expected NonFiniteLossError");
    } catch (const NonFiniteLossError& e) {
      CHECK(e.step() == 0);
    }
  }
}
