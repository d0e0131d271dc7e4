#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tase/cli/config.h"

namespace tase::cli {

enum ExitCode { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitCheckFailure = 3 };

struct CommandOptions {
  RunConfig config;
  bool config_given = false;
  std::string out_dir;
  std::string checkpoint;
  bool oracle = false;
  std::vector<std::string> captions;
  std::string captions_file;
  std::string fault;
  int points = 100;
  std::ostream* out = nullptr;  // progress and summaries; std::cout when null
};

int cmd_gen_data(const CommandOptions& o);
int cmd_train(const CommandOptions& o);
int cmd_eval(const CommandOptions& o);
int cmd_ablate(const CommandOptions& o);
int cmd_export_embeddings(const CommandOptions& o);
int cmd_grad_check(const CommandOptions& o);

// Runs a command and maps exceptions to exit codes, printing the message.
int run_command(int (*command)(const CommandOptions&), const CommandOptions& o, std::ostream& err);

// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace tase::cli
