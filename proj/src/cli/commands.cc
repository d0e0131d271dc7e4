#include "tase/cli/commands.h"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tase/cli/ablation.h"
#include "tase/cli/checkpoint.h"
#include "tase/cli/grad_suite.h"
#include "tase/grounder/train.h"

namespace tase::cli {

namespace fs = std::filesystem;

namespace {

std::ostream& log_of(const CommandOptions& o) { return o.out ? *o.out : std::cout; }

std::string out_dir(const CommandOptions& o, const std::string& fallback) {
  const std::string d = o.out_dir.empty() ? fallback : o.out_dir;
  fs::create_directories(d);
  return d;
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json split_stats(const hivg::Corpus& c) {
  const auto st = hivg::corpus_stats(c.chains);
  nlohmann::json tiers = nlohmann::json::array();
  for (int t = 0; t < hivg::kTiers; ++t) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [words, count] : st.word_histogram[t]) hist[std::to_string(words)] = count;
    tiers.push_back({{"tier", t + 1}, {"mean_words", st.mean_words[t]}, {"word_histogram", hist}});
  }
  return {{"scenes", c.scenes.size()}, {"chains", c.chains.size()}, {"tiers", tiers},
          {"negative_kinds", st.kind_counts}};
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

int cmd_gen_data(const CommandOptions& o) {
  const RunConfig& c = o.config;
  const std::string dir = out_dir(o, c.data_dir);
  RunConfig at = c;
  at.data_dir = dir;
  const Corpora data = generate_corpora(c);
  const auto chain_opts = c.gen_config(false).chain;
  hivg::save_corpus(at.train_chains_path(), at.train_scenes_path(), data.train, chain_opts);
  hivg::save_corpus(at.eval_chains_path(), at.eval_scenes_path(), data.eval, chain_opts);
  const nlohmann::json stats{{"train", split_stats(data.train)}, {"eval", split_stats(data.eval)}};
  write_file(join(dir, "stats.json"), stats.dump(2) + "\n");
  auto& log = log_of(o);
  for (const char* split : {"train", "eval"}) {
    const auto& s = stats[split];
    log << split << ": " << s["scenes"] << " scenes, " << s["chains"] << " chains, mean words per tier";
    for (const auto& t : s["tiers"]) log << ' ' << t["mean_words"].get<double>();
    log << '\n';
  }
  log << "wrote " << dir << '\n';
  return kExitOk;
}

int cmd_train(const CommandOptions& o) {
  const RunConfig& c = o.config;
  const std::string dir = out_dir(o, "run");
  const hivg::Corpus train = hivg::load_corpus(c.train_chains_path(), c.train_scenes_path());
  hivg::Corpus eval;
  if (c.eval_every > 0) eval = hivg::load_corpus(c.eval_chains_path(), c.eval_scenes_path());

  auto model = build_model(c);
  grounder::Trainer trainer(*model, train, c.train_config());
  const bool resume = !o.checkpoint.empty();
  if (resume) {
    const Checkpoint ck = Checkpoint::load(o.checkpoint);
    ck.check_compatible(c);
    model->store().load_json(ck.params);
    trainer.load_state(ck.iteration, ck.optimizer);
  }
  write_file(join(dir, "config.json"), c.to_json().dump(2) + "\n");
  const std::string log_path = join(dir, "train_log.jsonl");
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  if (!resume) {
    log << nlohmann::json{{"schema", "tase.trainlog/1"}, {"started", utc_now()}, {"config_hash", model_hash(c)}}.dump()
        << '\n';
  }
  auto save = [&] {
    Checkpoint ck{model_hash(c), trainer.iteration(), c.to_json(), model->store().to_json(), trainer.optimizer_state()};
    ck.save(join(dir, "checkpoint.json"));
  };
  auto& out = log_of(o);
  try {
    trainer.run([&](int it, const grounder::LossReport& r) {
      nlohmann::json line = r.to_json();
      line["step"] = it;
      log << line.dump() << '\n';
      const int done = it + 1;
      if (c.eval_every > 0 && done % c.eval_every == 0) {
        const auto m = grounder::evaluate(*model, eval, c.eval_options());
        log << nlohmann::json{{"step", it}, {"eval", {{"ap", m.ap}, {"ap_c", m.ap_c}, {"ap_d", m.ap_d}}}}.dump()
            << '\n';
        out << "step " << done << " AP " << m.ap << '\n';
      }
      if (c.checkpoint_every > 0 && done % c.checkpoint_every == 0) save();
      if (done % 50 == 0 || done == c.iterations) out << "step " << done << " loss " << r.total << '\n';
    });
  } catch (const grounder::NonFiniteLossError& e) {
    log << nlohmann::json{{"step", e.step()}, {"error", e.what()}}.dump() << '\n';
    throw;
  }
  save();
  out << "checkpoint " << join(dir, "checkpoint.json") << " at iteration " << trainer.iteration() << '\n';
  return kExitOk;
}

int cmd_eval(const CommandOptions& o) {
  RunConfig c = o.config;
  std::unique_ptr<grounder::GroundingModel> model;
  if (!o.oracle) {
    if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --oracle");
    const Checkpoint ck = Checkpoint::load(o.checkpoint);
    if (!o.config_given) c = RunConfig::from_json(ck.config);
    ck.check_compatible(c);
    model = build_model(c);
    model->store().load_json(ck.params);
  }
  const std::string dir = out_dir(o, "eval");
  const hivg::Corpus eval = hivg::load_corpus(c.eval_chains_path(), c.eval_scenes_path());
  grounder::Metrics m;
  if (model) {
    m = grounder::evaluate(*model, eval, c.eval_options());
  } else {
    grounder::VisionEncoder vision(c.model_config().vision);
    m = grounder::evaluate(grounder::oracle_detector(), eval, vision, c.eval_options());
  }
  write_file(join(dir, "metrics.json"), m.to_json().dump(2) + "\n");
  write_file(join(dir, "metrics.csv"), m.csv());
  write_file(join(dir, "angles.csv"), m.angle_csv());
  char buf[128];
  std::snprintf(buf, sizeof buf, "AP %.4f (AP_c %.4f, AP_d %.4f) over %zu queries\n", m.ap, m.ap_c, m.ap_d, m.queries);
  log_of(o) << buf;
  return kExitOk;
}

int cmd_ablate(const CommandOptions& o) {
  const RunConfig& c = o.config;
  const std::string dir = out_dir(o, "ablation");
  auto& out = log_of(o);
  Corpora data;
  if (fs::exists(c.train_chains_path())) {
    data = load_corpora(c);
  } else {
    out << "no corpus under " << c.data_dir << "; generating in memory\n";
    data = generate_corpora(c);
  }
  const auto variants = ablation_grid(c);
  out << variants.size() << " variants x " << c.ablate_seeds.size() << " seeds\n";
  const auto results = ablate(variants, c.ablate_seeds, data, [&](const std::string& v, std::uint64_t s, const auto& m) {
    out << "  " << v << " seed " << s << ": AP " << m.ap << '\n';
  });
  std::ostringstream csv;
  csv << "variant,seed,ap,ap_c,ap_d\n";
  char buf[96];
  for (const auto& r : results) {
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
      std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(r.seeds[k]),
                    r.runs[k].ap, r.runs[k].ap_c, r.runs[k].ap_d);
      csv << csv_field(r.name) << buf;
    }
  }
  write_file(join(dir, "ablation.csv"), csv.str());
  write_file(join(dir, "ablation.json"), results_to_json(results).dump(2) + "\n");
  const std::string table = ranked_table(results);
  write_file(join(dir, "ablation.txt"), table);
  out << table;
  return kExitOk;
}

int cmd_export_embeddings(const CommandOptions& o) {
  RunConfig c = o.config;
  Checkpoint ck;
  if (!o.checkpoint.empty()) {
    ck = Checkpoint::load(o.checkpoint);
    if (!o.config_given) c = RunConfig::from_json(ck.config);
    ck.check_compatible(c);
  }
  auto model = build_model(c);
  if (!o.checkpoint.empty()) model->store().load_json(ck.params);
  std::vector<std::string> captions = o.captions;
  if (!o.captions_file.empty()) {
    std::ifstream in(o.captions_file);
    if (!in) throw std::runtime_error("cannot open " + o.captions_file);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) captions.push_back(line);
    }
  }
  if (captions.empty()) throw ConfigError("export-embeddings: no captions given");
  std::ostringstream csv;
  csv << "caption,component";
  for (std::size_t i = 0; i < c.dim; ++i) csv << ",dim_" << i;
  csv << '\n';
  char buf[32];
  auto row = [&](const std::string& caption, const char* comp, const std::vector<double>& v) {
    csv << csv_field(caption) << ',' << comp;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      csv << buf;
    }
    csv << '\n';
  };
  for (const auto& caption : captions) {
    row(caption, "E", model->embed_value(caption));
    const auto comps = model->pooled_components(caption);
    for (std::size_t k = 0; k < comps.size(); ++k) row(caption, tride::kComponentNames[k], comps[k]);
  }
  if (o.out_dir.empty()) {
    log_of(o) << csv.str();
  } else {
    const std::string dir = out_dir(o, "");
    write_file(join(dir, "embeddings.csv"), csv.str());
    log_of(o) << "wrote " << captions.size() << " captions to " << join(dir, "embeddings.csv") << '\n';
  }
  return kExitOk;
}

int cmd_grad_check(const CommandOptions& o) {
  SuiteOptions so;
  so.points = o.points;
  so.fault = o.fault;
  so.seed = o.config.seed;
  const auto entries = gradient_suite(so);
  auto& out = log_of(o);
  bool ok = true;
  char buf[160];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-5s %-9s %-28s points %4d  max_rel_error %.3e\n", e.passed ? "PASS" : "FAIL",
                  e.module.c_str(), e.op.c_str(), e.points, e.max_rel_error);
    out << buf;
    ok = ok && e.passed;
  }
  if (!o.out_dir.empty()) write_file(join(out_dir(o, ""), "grad_check.json"), suite_to_json(entries).dump(2) + "\n");
  return ok ? kExitOk : kExitCheckFailure;
}

int run_command(int (*command)(const CommandOptions&), const CommandOptions& o, std::ostream& err) {
  try {
    return command(o);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const hivg::CorpusFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tase::cli
