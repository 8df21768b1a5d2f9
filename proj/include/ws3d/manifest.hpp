#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ws3d {

inline constexpr const char* kVersion = "1.0.0";

/// Git blob id (SHA-1 over "blob <len>\0" + bytes) of a byte string.
std::string git_blob_hash(const std::string& bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// Hash over a set of files: blob ids of the files, sorted by path, hashed
/// again as one blob of "<id> <path>\n" lines.
std::string content_hash(const std::vector<std::filesystem::path>& inputs);

/// Self-description of a CLI run, written before any work starts.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config_toml;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;

    std::string to_json() const;
    /// Writes `manifest.json` and `config.toml` into `dir`.
    void write(const std::filesystem::path& dir) const;
};

} // namespace ws3d
