#include "manifest.hpp"

#include <fstream>

#include "dynaprune/error.hpp"

namespace dynaprune::cli {

void to_json(nlohmann::ordered_json& j, const RunManifest& m) {
  j = nlohmann::ordered_json{{"tool", m.tool},
                             {"version", m.version},
                             {"subcommand", m.subcommand},
                             {"argv", m.argv},
                             {"cwd", m.cwd},
                             {"flags", m.flags},
                             {"seeds", m.seeds},
                             {"inputs", m.inputs},
                             {"outputs", m.outputs},
                             {"duration_seconds", m.duration_seconds}};
}

void from_json(const nlohmann::ordered_json& j, RunManifest& m) {
  j.at("tool").get_to(m.tool);
  j.at("version").get_to(m.version);
  j.at("subcommand").get_to(m.subcommand);
  j.at("argv").get_to(m.argv);
  j.at("cwd").get_to(m.cwd);
  m.flags = j.value("flags", nlohmann::ordered_json::object());
  m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.duration_seconds = j.value("duration_seconds", 0.0);
}

std::string manifest_path_for(const std::string& artifact) { return artifact + ".manifest.json"; }

void save_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << nlohmann::ordered_json(m).dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return nlohmann::ordered_json::parse(is).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": not a run manifest (" + e.what() + ")");
  }
}

bool override_output(std::vector<std::string>& argv, const std::string& output) {
  bool found = false;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if ((argv[i] == "--output" || argv[i] == "-o") && i + 1 < argv.size()) {
      argv[++i] = output;
      found = true;
    } else if (argv[i].rfind("--output=", 0) == 0) {
      argv[i] = "--output=" + output;
      found = true;
    }
  }
  return found;
}

}  // namespace dynaprune::cli
