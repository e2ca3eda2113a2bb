#include "manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace dgrlab::app {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t seconds = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm parts{};
  gmtime_r(&seconds, &parts);
  char text[32];
  std::strftime(text, sizeof text, "%Y-%m-%dT%H:%M:%S", &parts);
  char full[48];
  std::snprintf(full, sizeof full, "%s.%03dZ", text, static_cast<int>(millis));
  return full;
}

std::string to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["output_dir"] = m.output_dir;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at ? nlohmann::json(*m.finished_at) : nlohmann::json(nullptr);
  j["status"] = m.status;
  j["error"] = m.error ? nlohmann::json(*m.error) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest '" + path.string() + "'");
  const auto j = nlohmann::json::parse(in);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_path = j.at("config_path").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.output_dir = j.at("output_dir").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  if (!j.at("finished_at").is_null()) m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  if (!j.at("error").is_null()) m.error = j.at("error").get<std::string>();
  return m;
}

ManifestWriter::ManifestWriter(std::filesystem::path directory, RunManifest manifest)
    : path_(directory / "manifest.json"), manifest_(std::move(manifest)) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + directory.string() + "': " + ec.message());
  manifest_.output_dir = directory.string();
  manifest_.started_at = utc_now();
  manifest_.status = "running";
  write();
}

void ManifestWriter::complete() {
  manifest_.finished_at = utc_now();
  manifest_.status = "complete";
  write();
}

void ManifestWriter::fail(const std::string& message) {
  manifest_.finished_at = utc_now();
  manifest_.status = "failed";
  manifest_.error = message;
  write();
}

void ManifestWriter::write() const {
  // Write then rename, so readers never see a half-written manifest.
  const auto staging = path_.string() + ".tmp";
  {
    std::ofstream out(staging, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + staging + "'");
    out << to_json(manifest_);
    if (!out.flush()) throw std::runtime_error("cannot write '" + staging + "'");
  }
  std::filesystem::rename(staging, path_);
}

}  // namespace dgrlab::app
