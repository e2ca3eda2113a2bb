#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dgrlab::app {

// manifest.json in the output directory. It is written with status "running"
// before any heavy work, so a crashed run is recognisable afterwards.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string output_dir;
  std::string started_at;                  // ISO 8601 UTC
  std::optional<std::string> finished_at;  // unset while running
  std::string status = "running";          // running | complete | failed
  std::optional<std::string> error;
};

std::string utc_now();
std::string to_json(const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// Owns the manifest file for one run.
class ManifestWriter {
 public:
  ManifestWriter(std::filesystem::path directory, RunManifest manifest);

  void complete();
  void fail(const std::string& message);
  const RunManifest& manifest() const { return manifest_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void write() const;

  std::filesystem::path path_;
  RunManifest manifest_;
};

}  // namespace dgrlab::app
