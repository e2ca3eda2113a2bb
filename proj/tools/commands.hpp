#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace dgrlab::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // training diverged, I/O error, anything unexpected
  kExitConfig = 2,      // bad command line or config file
  kExitCheckpoint = 3,  // unreadable or incompatible checkpoint
};

inline constexpr const char* kCheckpointFile = "checkpoint.dgr";

struct RunOptions {
  std::string command;  // pretrain | finetune | eval | export-embeddings | export-dataset | show-config
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "dgrlab-run";
  std::string from;            // checkpoint path, or "random" for finetune
  std::size_t per_type = 20;   // export-dataset only
  bool quiet = false;
};

// Runs one subcommand. Reports go to `out` as a single JSON object, progress
// and errors go to `log`. Returns an ExitCode.
int run_command(const RunOptions& options, std::ostream& out, std::ostream& log);

}  // namespace dgrlab::app
