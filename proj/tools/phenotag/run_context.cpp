#include "run_context.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "phenotag/checkpoint.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/hash.hpp"
#include "phenotag/version.hpp"

namespace phenotag::cli {

RunContext::RunContext(std::string command, const CommonFlags& flags) : command_(std::move(command)), flags_(flags) {
  if (!flags.config.empty()) {
    config_ = load_run_config(flags.config);
    config_dir_ = fs::path(flags.config).parent_path();
  }
  if (flags.seed) config_.seed = *flags.seed;
  if (flags.workers) {
    if (*flags.workers == 0) throw ConfigError("--workers must be >= 1");
    config_.workers = *flags.workers;
  }
}

std::string RunContext::input_path(const std::string& flag, const std::string& configured,
                                   const std::string& what) const {
  auto path = optional_input(flag, configured);
  if (!path) throw ConfigError("no " + what + " given (pass a flag or set it in the config)");
  return *path;
}

std::optional<std::string> RunContext::optional_input(const std::string& flag, const std::string& configured) const {
  fs::path path;
  if (!flag.empty()) {
    path = flag;
  } else if (!configured.empty()) {
    path = fs::path(configured).is_absolute() ? fs::path(configured) : config_dir_ / configured;
  } else {
    return std::nullopt;
  }
  if (!fs::exists(path)) throw ConfigError("input does not exist: " + path.string());
  return path.string();
}

fs::path RunContext::output_path(const std::string& fallback) const {
  fs::path path;
  if (!flags_.out.empty()) {
    path = flags_.out;
    if (path.is_relative()) {
      if (const char* dir = std::getenv("PHENOTAG_OUT_DIR"); dir && *dir) path = fs::path(dir) / path;
    }
  } else if (!fallback.empty()) {
    path = fs::path(fallback).is_absolute() ? fs::path(fallback) : config_dir_ / fallback;
  } else {
    throw ConfigError("no output location given (pass --out)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

void RunContext::record_input(const std::string& role, const fs::path& path) {
  inputs_[role] = Json{{"path", path.string()}, {"hash", path_hash(path)}};
}

void RunContext::record_output(const std::string& role, const fs::path& path) {
  outputs_[role] = Json{{"path", path.string()}, {"hash", path_hash(path)}};
}

void RunContext::write_manifest(const fs::path& output) const {
  const fs::path target = fs::is_directory(output) ? output / "run_manifest.json"
                                                   : fs::path(output.string() + ".manifest.json");
  Json manifest;
  manifest["command"] = command_;
  manifest["version"] = kVersion;
  manifest["config_hash"] = config_hash(config_);
  manifest["config"] = config_;
  manifest["inputs"] = inputs_;
  manifest["outputs"] = outputs_;
  manifest["result"] = result_;
  manifest["created_at"] = utc_timestamp();
  std::ofstream out(target);
  if (!out) throw InputError("cannot write " + target.string());
  out << manifest.dump(2) << "\n";
}

void RunContext::require_seed() { config_.propagate_seed(); }

std::string path_hash(const fs::path& path) {
  if (fs::is_directory(path)) return checkpoint_hash(path);
  return file_hash(path);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace phenotag::cli
