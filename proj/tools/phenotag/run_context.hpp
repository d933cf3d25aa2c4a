#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phenotag/config.hpp"

namespace phenotag::cli {

namespace fs = std::filesystem;

// Flags shared by every subcommand.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
};

// Loaded configuration plus the bookkeeping needed to write run manifests.
class RunContext {
 public:
  RunContext(std::string command, const CommonFlags& flags);

  const std::string& command() const { return command_; }
  RunConfig& config() { return config_; }
  const RunConfig& config() const { return config_; }
  std::size_t workers() const { return config_.workers; }

  // Flag value if given, else the configured path resolved against the
  // config file's directory. Throws ConfigError when both are empty and
  // `what` is required.
  std::string input_path(const std::string& flag, const std::string& configured, const std::string& what) const;
  std::optional<std::string> optional_input(const std::string& flag, const std::string& configured) const;

  // Output location: --out (relative values are placed under PHENOTAG_OUT_DIR
  // when it is set), else the configured `fallback` resolved against the
  // config file's directory. Parent directories are created.
  fs::path output_path(const std::string& fallback = {}) const;

  // Records an input file (or checkpoint directory) for the manifest.
  void record_input(const std::string& role, const fs::path& path);
  void record_output(const std::string& role, const fs::path& path);
  void set_result(const std::string& key, Json value) { result_[key] = std::move(value); }

  // <file>.manifest.json next to a file output, run_manifest.json inside a
  // directory output.
  void write_manifest(const fs::path& output) const;

  // Fails with ConfigError unless a seed is set, then copies it into the
  // training blocks.
  void require_seed();

 private:
  std::string command_;
  CommonFlags flags_;
  RunConfig config_;
  fs::path config_dir_;
  Json inputs_ = Json::object();
  Json outputs_ = Json::object();
  Json result_ = Json::object();
};

// Hash of a file, or of the checkpoint manifest hash for a directory.
std::string path_hash(const fs::path& path);

std::string utc_timestamp();

}  // namespace phenotag::cli
