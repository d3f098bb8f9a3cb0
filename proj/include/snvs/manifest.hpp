#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "snvs/types.hpp"

namespace snvs {

inline constexpr const char* kVersion = "0.1.0";

/// FNV-1a 64-bit digest of a file's bytes, hex-encoded.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot digest '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  double wall_time_sec = 0.0;
  nlohmann::json inputs = nlohmann::json::object();  // path -> digest
  nlohmann::json extra = nlohmann::json::object();

  void add_input(const std::string& path) { inputs[path] = file_digest(path); }

  void write(const std::filesystem::path& out_dir) const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["wall_time_sec"] = wall_time_sec;
    j["inputs"] = inputs;
    for (auto& [key, value] : extra.items()) j[key] = value;
    std::ofstream out(out_dir / "run_manifest.json");
    if (!out) throw io_error("cannot write manifest in '" + out_dir.string() + "'");
    out << j.dump(2) << "\n";
  }
};

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace snvs
