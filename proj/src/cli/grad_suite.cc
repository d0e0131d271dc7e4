#include "tase/cli/grad_suite.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "tase/diff/grad_check.h"
#include "tase/geometry/geometry.h"
#include "tase/grounder/train.h"

namespace tase::cli {

using diff::GradCheckOptions;
using diff::GradCheckReport;
using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

bool wanted(const SuiteOptions& o, const std::string& module) {
  return o.only.empty() || std::find(o.only.begin(), o.only.end(), module) != o.only.end();
}

SuiteEntry summarize(const std::string& module, const std::string& op, const std::vector<GradCheckReport>& reports,
                     double tol) {
  const GradCheckReport m = diff::merge_reports(op, reports);
  SuiteEntry e{module, op, static_cast<int>(reports.size()), m.max_rel_error, m.excluded, false};
  e.passed = !reports.empty() && m.max_rel_error < tol;
  return e;
}

// Chains with every pairwise difference well away from zero.
std::vector<Tensor> random_chain_inputs(std::mt19937_64& rng, std::size_t tiers, std::size_t dim) {
  std::vector<Tensor> in;
  for (std::size_t i = 0; i < 2 * tiers + 1; ++i) in.push_back(diff::random_tensor(rng, {dim}, -2.0, 2.0));
  return in;
}

geometry::ChainVars chain_of(std::span<const Var> in, std::size_t tiers) {
  geometry::ChainVars v;
  for (std::size_t t = 0; t < tiers; ++t) {
    v.pos.push_back(in[2 * t]);
    v.neg.push_back(in[2 * t + 1]);
  }
  return v;
}

// Box (x0, y0, x1, y1) whose edges stay clear of the other box's edges so no
// min/max switches inside the difference step.
Tensor random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng), y = u(rng);
  return Tensor::vector({x, y, x + 0.2 + u(rng), y + 0.2 + u(rng)});
}

bool edges_apart(const Tensor& a, const hivg::Box& b) {
  const double bv[] = {b.x0, b.y0, b.x1, b.y1};
  for (std::size_t i = 0; i < 4; ++i) {
    for (double v : bv) {
      if (std::fabs(a[i] - v) < 1e-3) return false;
    }
  }
  return true;
}

grounder::ModelConfig small_model() {
  grounder::ModelConfig m;
  m.encoder.d_model = m.tride.d_model = m.tride.dim = m.vision.dim = 8;
  m.encoder.lora_rank = 2;
  m.encoder.lora_alpha = 2;
  m.tride.ffn_hidden = 8;
  m.tride.slots = 2;
  m.fusion_hidden = 8;
  return m;
}

// Moves every trainable tensor to a fresh random point near its init.
void perturb(tride::ParamStore& store, const std::map<std::string, Tensor>& init, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  for (const auto& [name, t] : init) {
    Tensor& p = store.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = t[i] + n(rng);
  }
}

}  // namespace

std::vector<SuiteEntry> gradient_suite(const SuiteOptions& o) {
  if (o.points < 1) throw std::invalid_argument("gradient suite: points must be positive");
  std::vector<SuiteEntry> out;
  GradCheckOptions gc;
  gc.tol = o.tol;
  gc.fault = o.fault;

  if (wanted(o, "diff")) {
    for (const auto& pc : diff::primitive_cases()) {
      std::mt19937_64 rng(o.seed ^ std::hash<std::string>{}(pc.name));
      std::vector<GradCheckReport> reports;
      GradCheckOptions opt = gc;
      opt.near_boundary = pc.near_boundary;
      for (int i = 0; i < o.points; ++i) reports.push_back(diff::grad_check_fn(pc.name, pc.fn, pc.sample(rng), opt));
      out.push_back(summarize("diff", pc.name, reports, o.tol));
    }
  }

  if (wanted(o, "geometry")) {
    using geometry::ReferenceMode;
    const std::size_t tiers = 3, dim = 4;
    struct Case {
      std::string name;
      std::function<Var(Graph&, std::span<const Var>)> fn;
    };
    const std::vector<Case> cases{
        {"exterior_angle", [](Graph&, std::span<const Var> in) { return geometry::exterior_angle(in[0], in[1], in[2]); }},
        {"flipped_exterior_angle",
         [](Graph&, std::span<const Var> in) { return geometry::flipped_exterior_angle(in[0], in[1], in[2]); }},
        {"normalize_relative",
         [](Graph&, std::span<const Var> in) { return geometry::normalize_relative(in[0], in[1], 1e-8); }},
        {"re_loss", [&](Graph&, std::span<const Var> in) { return geometry::re_loss(chain_of(in, tiers), in[6]); }},
        {"hier_pos_loss",
         [&](Graph&, std::span<const Var> in) {
           return geometry::hier_pos_loss(chain_of(in, tiers), in[6], ReferenceMode::kDynamic);
         }},
        {"hier_neg_loss",
         [&](Graph&, std::span<const Var> in) {
           return geometry::hier_neg_loss(chain_of(in, tiers), in[6], ReferenceMode::kDynamic);
         }},
        {"hier_pos_loss/global",
         [&](Graph&, std::span<const Var> in) {
           return geometry::hier_pos_loss(chain_of(in, tiers), in[6], ReferenceMode::kGlobal);
         }},
        {"hier_neg_loss/global",
         [&](Graph&, std::span<const Var> in) {
           return geometry::hier_neg_loss(chain_of(in, tiers), in[6], ReferenceMode::kGlobal);
         }},
    };
    for (const auto& c : cases) {
      std::mt19937_64 rng(o.seed ^ std::hash<std::string>{}(c.name));
      std::vector<GradCheckReport> reports;
      for (int i = 0; i < o.points; ++i) {
        reports.push_back(diff::grad_check_fn(c.name, c.fn, random_chain_inputs(rng, tiers, dim), gc));
      }
      out.push_back(summarize("geometry", c.name, reports, o.tol));
    }
  }

  if (wanted(o, "grounder")) {
    const std::size_t n = 5, d = 6;
    auto run = [&](const std::string& name, auto sample, auto fn) {
      std::mt19937_64 rng(o.seed ^ std::hash<std::string>{}(name));
      std::vector<GradCheckReport> reports;
      for (int i = 0; i < o.points; ++i) {
        auto [inputs, extra] = sample(rng);
        reports.push_back(diff::grad_check_fn(
            name, [&, extra](Graph& g, std::span<const Var> in) { return fn(g, in, extra); }, inputs, gc));
      }
      out.push_back(summarize("grounder", name, reports, o.tol));
    };
    using Labels = std::vector<double>;
    auto labelled = [&](std::mt19937_64& rng) {
      Labels y(n);
      for (auto& v : y) v = std::bernoulli_distribution(0.4)(rng) ? 1.0 : 0.0;
      return std::pair{std::vector<Tensor>{diff::random_tensor(rng, {d}), diff::random_tensor(rng, {n, d})}, y};
    };
    run("score_logits", labelled,
        [](Graph&, std::span<const Var> in, const Labels&) { return grounder::score_logits(in[0], in[1], 0.07); });
    run("focal_loss", labelled, [](Graph&, std::span<const Var> in, const Labels& y) {
      return grounder::focal_loss_logits(grounder::score_logits(in[0], in[1], 0.5), y, 2.0, 0.25);
    });
    auto boxes = [&](std::mt19937_64& rng) {
      for (;;) {
        Tensor pred = random_box(rng);
        const Tensor gt = random_box(rng);
        const hivg::Box b{gt[0], gt[1], gt[2], gt[3]};
        if (edges_apart(pred, b)) return std::pair{std::vector<Tensor>{pred}, b};
      }
    };
    run("giou_loss", boxes, [](Graph&, std::span<const Var> in, const hivg::Box& gt) {
      return grounder::giou_loss(grounder::box_vars(in[0]), gt);
    });
    run("l1_box_loss", boxes, [](Graph&, std::span<const Var> in, const hivg::Box& gt) {
      return grounder::l1_box_loss(grounder::box_vars(in[0]), gt);
    });
    auto vectors = [&](std::mt19937_64& rng) {
      std::vector<Tensor> in;
      for (int i = 0; i < 4; ++i) in.push_back(diff::random_tensor(rng, {d}));
      return std::pair{in, 0};
    };
    run("contrastive_baseline", vectors, [](Graph&, std::span<const Var> in, int) {
      const Var pos[] = {in[1]};
      const Var neg[] = {in[2], in[3]};
      return grounder::contrastive_baseline(in[0], pos, neg, 0.5);
    });
  }

  const bool want_tride = wanted(o, "tride"), want_batch = wanted(o, "grounder");
  if (want_tride || want_batch) {
    hivg::GenConfig gen;
    gen.seed = o.seed + 17;
    gen.scenes = 6;
    const hivg::Corpus corpus = hivg::generate_corpus(gen);
    grounder::GroundingModel model(small_model());
    auto& store = model.store();
    std::vector<std::string> names;
    std::map<std::string, Tensor> init;
    for (const auto& name : store.names()) {
      if (store.group(name) == tride::ParamGroup::kFrozen) continue;
      names.push_back(name);
      init.emplace(name, store.at(name));
    }
    grounder::TrainConfig tc;
    tc.batch_chains = 2;
    tc.tride_loss.margin = 2.5;  // every hinge active
    grounder::Trainer trainer(model, corpus, tc);
    GradCheckOptions opt = gc;
    opt.max_coords_per_input = 2;
    const auto& tcfg = model.config().tride;

    auto sweep = [&](const std::string& module, const std::string& name, auto build) {
      std::mt19937_64 rng(o.seed ^ std::hash<std::string>{}(name));
      std::vector<GradCheckReport> reports;
      for (int i = 0; i < o.points; ++i) {
        perturb(store, init, rng);
        opt.coord_seed = static_cast<std::uint64_t>(i);
        reports.push_back(tride::grad_check_params(name, store, names, build(i), opt));
      }
      out.push_back(summarize(module, name, reports, o.tol));
    };
    if (want_tride) {
      sweep("tride", "tride_forward", [&](int i) {
        const auto& chain = corpus.chains[static_cast<std::size_t>(i) % corpus.chains.size()];
        return [&, caption = chain.tiers[2].positive](tride::Binder& b) {
          return tride::tride_forward(b, tcfg, model.encoder().encode(b, caption)).embedding;
        };
      });
      sweep("tride", "tride_loss", [&](int i) {
        const auto& chain = corpus.chains[static_cast<std::size_t>(i) % corpus.chains.size()];
        return [&](tride::Binder& b) {
          tride::ChainComponents cc;
          for (const auto& tier : chain.tiers) {
            cc.pos.push_back(tride::tride_forward(b, tcfg, model.encoder().encode(b, tier.positive)).components);
            cc.neg.push_back(tride::tride_forward(b, tcfg, model.encoder().encode(b, tier.negative)).components);
          }
          std::vector<tride::ChainComponents> batch{cc};
          return tride::tride_loss(b.graph(), batch, tc.tride_loss).total;
        };
      });
    }
    if (want_batch) {
      const auto modes = grounder::all_modes();
      sweep("grounder", "batch_loss", [&](int i) {
        grounder::TrainConfig mc = tc;
        mc.mode = modes[static_cast<std::size_t>(i) % modes.size()];
        return [&, mc, batch = trainer.batch_at(i)](tride::Binder& b) {
          return grounder::batch_loss(model, b, batch, mc).total;
        };
      });
    }
  }
  return out;
}

nlohmann::json suite_to_json(const std::vector<SuiteEntry>& entries) {
  nlohmann::json ops = nlohmann::json::array();
  bool all = true;
  for (const auto& e : entries) {
    ops.push_back({{"module", e.module},
                   {"op", e.op},
                   {"points", e.points},
                   {"max_rel_error", e.max_rel_error},
                   {"excluded", e.excluded},
                   {"passed", e.passed}});
    all = all && e.passed;
  }
  return {{"passed", all}, {"ops", ops}};
}

}  // namespace tase::cli
