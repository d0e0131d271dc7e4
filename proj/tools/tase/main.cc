#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "tase/cli/checkpoint.h"
#include "tase/cli/commands.h"

using namespace tase::cli;

int main(int argc, char** argv) {
  CLI::App app{"tase: tiered caption data, hierarchy-aware grounding training and diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, mode;
  std::optional<std::uint64_t> seed;
  CommandOptions o;
  app.add_option("--config", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", o.out_dir, "output directory");
  app.add_option("--checkpoint", o.checkpoint, "checkpoint to resume from or evaluate");
  app.add_option("--mode", mode, "loss mode: base, CL, RE, H, H+only, H-only, reverse-H");

  using Command = int (*)(const CommandOptions&);
  Command command = nullptr;
  auto sub = [&](const char* name, const char* help, Command c) {
    auto* s = app.add_subcommand(name, help);
    s->callback([&command, c] { command = c; });
    return s;
  };
  sub("gen-data", "generate train/eval corpora and stats", cmd_gen_data);
  sub("train", "train a grounding model; writes a JSONL log and checkpoint", cmd_train);
  auto* eval = sub("eval", "evaluate a checkpoint; writes metrics JSON/CSV and angle CSV", cmd_eval);
  eval->add_flag("--oracle", o.oracle, "score with the ground-truth oracle");
  sub("ablate", "train every grid variant per seed and rank by median AP", cmd_ablate);
  auto* exp = sub("export-embeddings", "write E and pooled O/A/R per caption as CSV", cmd_export_embeddings);
  exp->add_option("--captions", o.captions_file, "file with one caption per line");
  exp->add_option("caption", o.captions, "captions");
  auto* gc = sub("grad-check", "finite-difference suite over every op; exit 3 on failure", cmd_grad_check);
  gc->add_option("--fault", o.fault, "negate the backward of this primitive");
  gc->add_option("--points", o.points, "random points per op")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (!config_path.empty()) {
      o.config = RunConfig::load(config_path);
      o.config_given = true;
    } else if (!o.checkpoint.empty() && std::filesystem::exists(o.checkpoint)) {
      // Resume and evaluate with the run's own config unless one is given.
      o.config = RunConfig::from_json(Checkpoint::load(o.checkpoint).config);
      o.config_given = true;
    }
    if (seed) o.config.seed = *seed;
    if (!mode.empty()) o.config.loss_mode = mode;
    o.config.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return run_command(command, o, std::cerr);
}
