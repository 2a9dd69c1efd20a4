#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vistext::cli {

inline constexpr const char* kVersion = "0.1.0";

// Hash of a JSON document after key sorting, so field order is irrelevant.
std::string config_hash(std::string_view json_text);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json;  // resolved config
  std::uint64_t master_seed = 0;
  std::map<std::string, std::string> module_versions;
  std::map<std::string, std::string> outputs;  // role -> path
  std::map<std::string, std::string> extra;    // difficulty, split, agent, ...
  std::string started;
  std::string finished;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

// Cache root: $SCENE_CACHE_DIR when set, else ./.vistext-cache.
std::filesystem::path cache_root();

// Exit codes: 0 success, 2 usage error, 1 runtime error.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace vistext::cli
