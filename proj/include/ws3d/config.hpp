#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <ws3d/synthgen.hpp>
#include <ws3d/trainer.hpp>

namespace ws3d {

/// Values of the TOML subset used by run configs: strings, integers,
/// floats, booleans and flat numeric arrays, under `[table]` headers.
using TomlValue = std::variant<std::string, long long, double, bool, std::vector<double>>;

/// Flat view of a document; keys are dotted (`loss.tau`).
class TomlDocument {
public:
    static TomlDocument parse(const std::string& text);
    static TomlDocument load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return m_values.contains(key); }
    const std::map<std::string, TomlValue>& values() const noexcept { return m_values; }

    double get_number(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_array(const std::string& key, const std::vector<double>& fallback) const;

    /// Throws ConfigError naming the first key outside `known`.
    void check_keys(const std::vector<std::string>& known) const;

private:
    std::map<std::string, TomlValue> m_values;
};

JawConfig jaw_config_from(const TomlDocument& doc);
TrainConfig train_config_from(const TomlDocument& doc);

std::string to_toml(const JawConfig& cfg);
std::string to_toml(const TrainConfig& cfg);

} // namespace ws3d
