#pragma once

// Provenance record embedded in every CLI output.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "shieldscan/io.hpp"

namespace shieldscan {

inline constexpr const char* kVersion = "0.1.0";

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string timestamp;  // UTC, ISO 8601

  void add_input(const std::filesystem::path& path);
  json to_json() const;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace shieldscan
