#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgrel/io.hpp"

namespace kgrel {

inline constexpr const char* kToolVersion = "0.1.0";

// Every run that writes an artifact records what produced it: the command,
// the resolved configuration, digests of the inputs, the seed, and timing.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed)
      : command_(std::move(command)), seed_(seed), start_(std::chrono::steady_clock::now()) {}

  void set_config(nlohmann::json config) { config_ = std::move(config); }

  void add_input(const std::filesystem::path& path) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    inputs_.push_back({{"path", path.string()}, {"fnv1a64", std::string(hex)}});
  }

  void add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

  // written alongside the primary output as <output>.manifest.json
  void write(const std::filesystem::path& primary_output) const {
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
    nlohmann::json j;
    j["command"] = command_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["seed"] = seed_;
    j["tool_version"] = kToolVersion;
    j["duration_seconds"] = elapsed.count();
    AtomicFile f(primary_output.string() + ".manifest.json");
    f.stream() << j.dump(2) << '\n';
    f.commit();
  }

 private:
  std::string command_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace kgrel
