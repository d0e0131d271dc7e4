#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "tase/cli/ablation.h"
#include "tase/cli/checkpoint.h"
#include "tase/cli/commands.h"
#include "tase/cli/grad_suite.h"

using namespace tase::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("tase_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> jsonl(const std::string& path) {
  std::vector<json> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

RunConfig tiny(const TempDir& d) {
  RunConfig c;
  c.data_dir = d / "data";
  c.train_scenes = 12;
  c.eval_scenes = 6;
  c.iterations = 6;
  c.images_per_batch = 2;
  c.d_model = c.dim = 8;
  c.ffn_hidden = 8;
  c.fusion_hidden = 8;
  c.lora_rank = 2;
  c.lora_alpha = 2;
  c.t_max = 2;
  return c;
}

int run(int (*cmd)(const CommandOptions&), CommandOptions o) {
  std::ostringstream sink, err;
  o.out = &sink;
  const int code = run_command(cmd, o, err);
  INFO(err.str());
  return code;
}

CommandOptions opts(const RunConfig& c, const std::string& out = "") {
  CommandOptions o;
  o.config = c;
  o.config_given = true;
  o.out_dir = out;
  return o;
}

}  // namespace

TEST_CASE("config defaults carry the reference hyperparameters") {
  const RunConfig c;
  CHECK(c.lora_rank == 16);
  CHECK(c.lora_alpha == 16.0);
  CHECK(c.lr_module == 1e-4);
  CHECK(c.lr_adapter == 5e-6);
  CHECK(c.lambda == 0.1);
  CHECK(c.w_class == 4.0);
  CHECK(c.w_bbox == 5.0);
  CHECK(c.w_giou == 2.0);
  CHECK(c.w_tase == 5.0);
  CHECK(c.pos_neg_ratio_h == "2:1");
  CHECK(c.pos_neg_ratio_re == "10:4");
  CHECK(c.images_per_batch == 16);
  CHECK_NOTHROW(c.validate());
  const auto m = c.model_config();
  CHECK(m.encoder.lora_rank == 16);
  CHECK(m.tride.slots == c.t_max);
  CHECK(c.train_config().weights.tase == 5.0);
}

TEST_CASE("shipped benchmark config equals the preset") {
  const RunConfig shipped = RunConfig::load(std::string(TASE_CONFIG_DIR) + "/ablation.json");
  CHECK(shipped.to_json() == ablation_preset().to_json());
}

TEST_CASE("config round trip and validation") {
  RunConfig c;
  c.seed = 9;
  c.loss_mode = "RE";
  c.ablate_components = {1, 3};
  const json j = c.to_json();
  CHECK(j["schema_version"] == kConfigSchema);
  CHECK(RunConfig::from_json(j).to_json() == j);
  SUBCASE("partial input is filled with defaults") {
    const RunConfig p = RunConfig::from_json(json{{"seed", 4}});
    json expect = RunConfig{}.to_json();
    expect["seed"] = 4;
    CHECK(p.to_json() == expect);
  }
  auto message = [](const json& bad) {
    try {
      RunConfig::from_json(bad);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"learning_rate", 1}}).find("'learning_rate'") != std::string::npos);
  CHECK(message({{"loss_mode", "H++"}}).find("'loss_mode'") != std::string::npos);
  CHECK(message({{"placement", "sideways"}}).find("'placement'") != std::string::npos);
  CHECK(message({{"attention", "cross"}}).find("'attention'") != std::string::npos);
  CHECK(message({{"components", 4}}).find("'components'") != std::string::npos);
  CHECK(message({{"iterations", "ten"}}).find("'iterations'") != std::string::npos);
  CHECK(message({{"seed", -1}}).find("'seed'") != std::string::npos);
  CHECK(message({{"pos_neg_ratio_h", "2-1"}}).find("'pos_neg_ratio_h'") != std::string::npos);
  CHECK(message({{"schema_version", "tase.config/0"}}).find("'schema_version'") != std::string::npos);
  CHECK(message({{"ablate_modes", {"H", "X"}}}).find("'ablate_modes'") != std::string::npos);
}

TEST_CASE("gen-data is deterministic and its stats recount") {
  TempDir d;
  RunConfig c = tiny(d);
  REQUIRE(run(cmd_gen_data, opts(c, d / "a")) == kExitOk);
  REQUIRE(run(cmd_gen_data, opts(c, d / "b")) == kExitOk);
  for (const char* f : {"train_chains.jsonl", "train_scenes.jsonl", "eval_chains.jsonl", "eval_scenes.jsonl",
                        "stats.json"}) {
    CHECK(slurp(d / ("a/" + std::string(f))) == slurp(d / ("b/" + std::string(f))));
  }
  const json stats = json::parse(slurp(d / "a/stats.json"));
  for (const char* split : {"train", "eval"}) {
    const auto lines = jsonl(d / ("a/" + std::string(split) + "_chains.jsonl"));
    std::vector<json> chains(lines.begin() + 1, lines.end());  // first line is the schema header
    const auto& s = stats[split];
    CHECK(s["chains"] == chains.size());
    int kinds = 0;
    for (const auto& [k, v] : s["negative_kinds"].items()) kinds += v.get<int>();
    CHECK(kinds == static_cast<int>(3 * chains.size()));
    for (int t = 0; t < 3; ++t) {
      std::map<std::string, int> recount;
      for (const auto& ch : chains) {
        std::istringstream words(ch["tiers"][t]["positive"].get<std::string>());
        int n = 0;
        for (std::string w; words >> w;) ++n;
        ++recount[std::to_string(n)];
      }
      std::map<std::string, int> hist;
      for (const auto& [k, v] : s["tiers"][t]["word_histogram"].items()) hist[k] = v.get<int>();
      CHECK(hist == recount);
    }
  }
  SUBCASE("another seed changes the corpus") {
    RunConfig other = c;
    other.data_seed = c.data_seed + 1;
    REQUIRE(run(cmd_gen_data, opts(other, d / "c")) == kExitOk);
    CHECK(slurp(d / "a/train_chains.jsonl") != slurp(d / "c/train_chains.jsonl"));
  }
}

TEST_CASE("train: logging, mode gating, resume and reproducibility") {
  TempDir d;
  RunConfig c = tiny(d);
  REQUIRE(run(cmd_gen_data, opts(c)) == kExitOk);

  REQUIRE(run(cmd_train, opts(c, d / "full")) == kExitOk);
  const auto log = jsonl(d / "full/train_log.jsonl");
  REQUIRE(log.size() == 1 + static_cast<std::size_t>(c.iterations));
  CHECK(log[0].contains("started"));
  for (const char* k : {"cls", "bbox", "giou", "tride", "orthogonality", "margin", "sentence_pos", "sentence_neg",
                        "tase", "total"}) {
    CHECK(log[1].contains(k));
  }

  SUBCASE("identical runs match byte for byte outside the header") {
    REQUIRE(run(cmd_train, opts(c, d / "again")) == kExitOk);
    CHECK(slurp(d / "full/checkpoint.json") == slurp(d / "again/checkpoint.json"));
    const auto again = jsonl(d / "again/train_log.jsonl");
    CHECK(std::vector<json>(log.begin() + 1, log.end()) == std::vector<json>(again.begin() + 1, again.end()));
  }

  SUBCASE("resumed run matches the unbroken run") {
    RunConfig half = c;
    half.iterations = c.iterations / 2;
    REQUIRE(run(cmd_train, opts(half, d / "half")) == kExitOk);
    CommandOptions o = opts(c, d / "half");
    o.checkpoint = d / "half/checkpoint.json";
    REQUIRE(run(cmd_train, o) == kExitOk);
    CHECK(slurp(d / "half/checkpoint.json") == slurp(d / "full/checkpoint.json"));
    const auto resumed = jsonl(d / "half/train_log.jsonl");
    CHECK(std::vector<json>(resumed.begin() + 1, resumed.end()) == std::vector<json>(log.begin() + 1, log.end()));
  }

  SUBCASE("CL mode uses no geometry terms") {
    RunConfig cl = c;
    cl.loss_mode = "CL";
    REQUIRE(run(cmd_train, opts(cl, d / "cl")) == kExitOk);
    const auto l = jsonl(d / "cl/train_log.jsonl");
    for (std::size_t i = 1; i < l.size(); ++i) {
      CHECK(l[i]["sentence_neg"] == 0.0);
      CHECK(l[i]["sentence_pos"].get<double>() > 0.0);
    }
  }

  SUBCASE("incompatible checkpoint is a validation error") {
    RunConfig wide = c;
    wide.ffn_hidden = 12;
    CommandOptions o = opts(wide, d / "wide");
    o.checkpoint = d / "full/checkpoint.json";
    CHECK(run(cmd_train, o) == kExitValidation);
    CHECK(run(cmd_eval, o) == kExitValidation);
  }

  SUBCASE("non-finite loss aborts with the step index") {
    RunConfig bad = c;
    bad.lr_module = 1e300;
    bad.lr_adapter = 1e300;
    CHECK(run(cmd_train, opts(bad, d / "nan")) == kExitRuntime);
    const auto l = jsonl(d / "nan/train_log.jsonl");
    REQUIRE(l.back().contains("error"));
    CHECK(l.back()["step"].get<int>() < c.iterations);
    CHECK(!fs::exists(d / "nan/checkpoint.json"));
  }
}

TEST_CASE("missing corpus is a runtime error") {
  TempDir d;
  CHECK(run(cmd_train, opts(tiny(d), d / "x")) == kExitRuntime);
}

TEST_CASE("200-step smoke run lowers the total loss") {
  // Benchmark learning rates with the reference loss weights.
  TempDir d;
  RunConfig c;
  c.data_dir = d / "data";
  c.train_scenes = 200;
  c.eval_scenes = 10;
  c.lr_module = c.lr_adapter = 3e-3;
  REQUIRE(run(cmd_gen_data, opts(c)) == kExitOk);
  std::vector<double> drops;
  for (std::uint64_t seed : {0, 1, 2}) {
    c.seed = seed;
    const std::string out = d / ("s" + std::to_string(seed));
    REQUIRE(run(cmd_train, opts(c, out)) == kExitOk);
    const auto log = jsonl(out + "/train_log.jsonl");
    REQUIRE(log.size() == 201);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
      first += log[1 + i]["total"].get<double>() / 10;
      last += log[191 + i]["total"].get<double>() / 10;
    }
    drops.push_back(1.0 - last / first);
  }
  INFO("drops " << drops[0] << " " << drops[1] << " " << drops[2]);
  CHECK(median(drops) >= 0.2);
}

TEST_CASE("eval: oracle, determinism and CSV round trip") {
  TempDir d;
  RunConfig c = tiny(d);
  REQUIRE(run(cmd_gen_data, opts(c)) == kExitOk);
  REQUIRE(run(cmd_train, opts(c, d / "run")) == kExitOk);

  CommandOptions oracle = opts(c, d / "oracle");
  oracle.oracle = true;
  REQUIRE(run(cmd_eval, oracle) == kExitOk);
  CHECK(json::parse(slurp(d / "oracle/metrics.json"))["ap"] == 1.0);

  CommandOptions o = opts(c, d / "e1");
  o.checkpoint = d / "run/checkpoint.json";
  o.config_given = false;  // config comes from the checkpoint
  REQUIRE(run(cmd_eval, o) == kExitOk);
  o.out_dir = d / "e2";
  REQUIRE(run(cmd_eval, o) == kExitOk);
  for (const char* f : {"metrics.json", "metrics.csv", "angles.csv"}) {
    CHECK(slurp(d / ("e1/" + std::string(f))) == slurp(d / ("e2/" + std::string(f))));
  }

  const json m = json::parse(slurp(d / "e1/metrics.json"));
  std::istringstream csv(slurp(d / "e1/metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "metric,name,value");
  std::map<std::string, double> parsed;
  while (std::getline(csv, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    REQUIRE(a != b);
    parsed[line.substr(0, b)] = std::stod(line.substr(b + 1));
  }
  CHECK(parsed.at("ap,AP") == m["ap"].get<double>());
  CHECK(parsed.at("ap,AP_c") == m["ap_c"].get<double>());
  CHECK(parsed.at("ap,AP_d") == m["ap_d"].get<double>());

  std::istringstream angles(slurp(d / "e1/angles.csv"));
  std::getline(angles, line);
  CHECK(line == "bin_low,bin_high,count_pos,count_neg");
  int rows = 0;
  while (std::getline(angles, line)) ++rows;
  CHECK(rows == c.angle_bins);

  CommandOptions none = opts(c, d / "e3");
  CHECK(run(cmd_eval, none) == kExitValidation);
}

TEST_CASE("ablate: rows per variant and identical variants agree") {
  TempDir d;
  RunConfig c = tiny(d);
  c.iterations = 3;
  c.ablate_modes = {"H", "H"};
  c.ablate_seeds = {0};
  REQUIRE(run(cmd_ablate, opts(c, d / "ab")) == kExitOk);
  const json r = json::parse(slurp(d / "ab/ablation.json"));
  REQUIRE(r.size() == 2);
  CHECK(r[0]["runs"] == r[1]["runs"]);

  c.ablate_modes = {"H", "CL"};
  c.ablate_seeds = {0, 1};
  REQUIRE(run(cmd_ablate, opts(c, d / "ab2")) == kExitOk);
  const json r2 = json::parse(slurp(d / "ab2/ablation.json"));
  REQUIRE(r2.size() == 2);
  CHECK(r2[0]["median_ap"].get<double>() >= r2[1]["median_ap"].get<double>());
  for (const auto& v : r2) CHECK(v["runs"].size() == 2);
  CHECK(slurp(d / "ab2/ablation.txt").find("seed 1:") != std::string::npos);

  const auto grid = [&] {
    RunConfig g = c;
    g.ablate_components = {1, 2, 3};
    g.ablate_placements = {"token-level", "after-pooling"};
    return ablation_grid(g);
  }();
  CHECK(grid.size() == 2 * 3 * 2);
}

TEST_CASE("export-embeddings") {
  TempDir d;
  RunConfig c = tiny(d);
  REQUIRE(run(cmd_gen_data, opts(c)) == kExitOk);
  REQUIRE(run(cmd_train, opts(c, d / "run")) == kExitOk);
  CommandOptions o = opts(c, d / "x1");
  o.checkpoint = d / "run/checkpoint.json";
  o.captions = {"woman", "red woman", "left woman with red shirt"};
  REQUIRE(run(cmd_export_embeddings, o) == kExitOk);
  o.out_dir = d / "x2";
  REQUIRE(run(cmd_export_embeddings, o) == kExitOk);
  const std::string text = slurp(d / "x1/embeddings.csv");
  CHECK(text == slurp(d / "x2/embeddings.csv"));

  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("caption,component,dim_0,", 0) == 0);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream cs(line);
    for (std::string cell; std::getline(cs, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  REQUIRE(rows.size() == 4 * o.captions.size());

  // Recompute in-process from the same checkpoint.
  auto model = build_model(c);
  model->store().load_json(Checkpoint::load(d / "run/checkpoint.json").params);
  double worst = 0.0;
  for (std::size_t i = 0; i < o.captions.size(); ++i) {
    const auto e = model->embed_value(o.captions[i]);
    const auto comps = model->pooled_components(o.captions[i]);
    for (std::size_t r = 0; r < 4; ++r) {
      const auto& cells = rows[4 * i + r];
      CHECK(cells[0] == o.captions[i]);
      CHECK(cells[1] == std::string(r == 0 ? "E" : tase::tride::kComponentNames[r - 1]));
      const auto& ref = r == 0 ? e : comps[r - 1];
      REQUIRE(cells.size() == 2 + ref.size());
      for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::fabs(std::stod(cells[2 + k]) - ref[k]));
    }
  }
  CHECK(worst < 1e-12);
  CHECK(csv_field("a,b") == "\"a,b\"");
}

TEST_CASE("grad-check") {
  CommandOptions o;
  o.points = 2;
  CHECK(run(cmd_grad_check, o) == kExitOk);
  o.fault = "cosine_similarity";
  CHECK(run(cmd_grad_check, o) == kExitCheckFailure);

  SuiteOptions so;
  so.points = 2;
  so.only = {"diff"};
  so.fault = "softmax";
  bool flagged = false;
  for (const auto& e : gradient_suite(so)) {
    CHECK(e.module == "diff");
    CHECK(e.points == 2);
    CHECK(std::isfinite(e.max_rel_error));
    if (e.op == "softmax") flagged = !e.passed;
    if (e.op == "add") CHECK(e.passed);
  }
  CHECK(flagged);
}
