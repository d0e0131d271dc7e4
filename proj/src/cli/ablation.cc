#include "tase/cli/ablation.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "tase/grounder/train.h"

namespace tase::cli {

std::unique_ptr<grounder::GroundingModel> build_model(const RunConfig& config) {
  return std::make_unique<grounder::GroundingModel>(config.model_config());
}

Corpora generate_corpora(const RunConfig& config) {
  return {hivg::generate_corpus(config.gen_config(false)), hivg::generate_corpus(config.gen_config(true))};
}

Corpora load_corpora(const RunConfig& config) {
  return {hivg::load_corpus(config.train_chains_path(), config.train_scenes_path()),
          hivg::load_corpus(config.eval_chains_path(), config.eval_scenes_path())};
}

grounder::Metrics run_variant(const RunConfig& config, const Corpora& data) {
  auto model = build_model(config);
  grounder::Trainer trainer(*model, data.train, config.train_config());
  trainer.run();
  return grounder::evaluate(*model, data.eval, config.eval_options());
}

std::vector<Variant> ablation_grid(const RunConfig& base) {
  std::vector<Variant> out{{"", base}};
  auto expand = [&](const auto& values, const char* label, auto apply) {
    if (values.empty()) return;
    std::vector<Variant> next;
    for (const auto& v : out) {
      for (const auto& x : values) {
        Variant n = v;
        std::ostringstream name;
        name << (n.name.empty() ? "" : n.name + " ") << label << "=" << x;
        n.name = name.str();
        apply(n.config, x);
        next.push_back(std::move(n));
      }
    }
    out = std::move(next);
  };
  expand(base.ablate_modes, "mode", [](RunConfig& c, const std::string& m) { c.loss_mode = m; });
  expand(base.ablate_components, "components", [](RunConfig& c, int k) { c.components = k; });
  expand(base.ablate_placements, "placement", [](RunConfig& c, const std::string& p) { c.placement = p; });
  expand(base.ablate_attention, "attention", [](RunConfig& c, const std::string& a) { c.attention = a; });
  if (out.size() == 1 && out[0].name.empty()) out[0].name = "mode=" + base.loss_mode;
  for (const auto& v : out) v.config.validate();
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<VariantResult> ablate(const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                  const Corpora& data, const Progress& progress) {
  if (seeds.empty()) throw std::invalid_argument("ablate: no seeds");
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    VariantResult r{v.name, seeds, {}, 0.0};
    std::vector<double> aps;
    for (std::uint64_t s : seeds) {
      RunConfig c = v.config;
      c.seed = s;
      r.runs.push_back(run_variant(c, data));
      aps.push_back(r.runs.back().ap);
      if (progress) progress(v.name, s, r.runs.back());
    }
    r.median_ap = median(aps);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const VariantResult& a, const VariantResult& b) { return a.median_ap > b.median_ap; });
  return out;
}

std::string ranked_table(const std::vector<VariantResult>& results) {
  std::ostringstream os;
  char buf[64];
  os << "rank  median_AP  variant  [per-seed AP]\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::snprintf(buf, sizeof buf, "%4zu  %9.4f  ", i + 1, r.median_ap);
    os << buf << r.name << "  [";
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%sseed %llu: %.4f", k ? ", " : "", static_cast<unsigned long long>(r.seeds[k]),
                    r.runs[k].ap);
      os << buf;
    }
    os << "]\n";
  }
  return os.str();
}

nlohmann::json results_to_json(const std::vector<VariantResult>& results) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
      runs.push_back({{"seed", r.seeds[k]}, {"ap", r.runs[k].ap}, {"ap_c", r.runs[k].ap_c}, {"ap_d", r.runs[k].ap_d}});
    }
    out.push_back({{"variant", r.name}, {"median_ap", r.median_ap}, {"runs", runs}});
  }
  return out;
}

}  // namespace tase::cli
