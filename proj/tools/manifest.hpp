#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dynaprune::cli {

/// Record of one invocation, written next to every artifact it produced.
/// `argv` is what replay re-executes; `flags` is the fully resolved option set
/// (including defaults) for human inspection.
struct RunManifest {
  std::string tool = "dynaprune";
  std::string version;
  std::string subcommand;
  std::vector<std::string> argv;
  std::string cwd;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
};

void to_json(nlohmann::ordered_json& j, const RunManifest& m);
void from_json(const nlohmann::ordered_json& j, RunManifest& m);

std::string manifest_path_for(const std::string& artifact);
void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

/// Replaces the value of --output/-o in `argv` (either "--output X" or
/// "--output=X"). Returns false if no output flag was present.
bool override_output(std::vector<std::string>& argv, const std::string& output);

}  // namespace dynaprune::cli
