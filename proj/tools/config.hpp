#pragma once

// INI run configuration for the command-line tool.
//
// Sections mirror the pipeline stages: [run], [data], [strengths], [mos],
// [model], [pretrain], [finetune], [eval]. Every key is optional and falls
// back to the TrainConfig default, so an empty file runs the standard
// pipeline. One exception: a [data] section must list `types`, since a data
// section that silently inherits the full catalog is almost always a typo.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dgrlab/train.hpp"

namespace dgrlab::app {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedConfig {
  train::TrainConfig config;
  std::string text;  // raw file bytes, hashed into the run manifest
  std::string path;  // empty when no file was given
};

train::TrainConfig parse_config(std::string_view text);
LoadedConfig load_config(const std::filesystem::path& path);
// No file: defaults, hashed as empty content.
LoadedConfig default_config();

// Canonical INI text covering every key; parse_config(render_config(c))
// reproduces c.
std::string render_config(const train::TrainConfig& config);

// Hex SHA-1 of "blob <size>\0" + content, as `git hash-object` prints it.
std::string git_blob_hash(std::string_view content);

}  // namespace dgrlab::app
