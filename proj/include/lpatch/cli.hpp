#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace lpatch {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

// SHA-1 of "blob <size>\0<content>", as printed by `git hash-object`.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

// Provenance record written as <out>/manifest.json by every command.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void add_input(const std::string& role, const std::filesystem::path& path);
  // Hashes annotations.json and every image it references, in file order.
  void add_dataset(const std::string& role, const std::filesystem::path& dir);
  void add_output(const std::string& role, const std::filesystem::path& path);
  void add_result(const std::string& key, nlohmann::json value) { results_[key] = std::move(value); }

  // Wall-clock seconds for a named phase, measured from the previous mark.
  void mark(const std::string& phase);

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& out_dir) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_ = 0;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json results_ = nlohmann::json::object();
  nlohmann::json timings_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::time_point last_;
};

// Entry point of the `lpatch` tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace lpatch
