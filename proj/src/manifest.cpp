#include <ws3d/manifest.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace {

std::string hex(const unsigned char* digest, std::size_t n)
{
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (std::size_t i = 0; i < n; ++i)
        os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

std::string read_all(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::map<std::string, std::string> kModules{
    {"synthgen", "1"}, {"camera", "1"},     {"segnet", "1"},  {"losses", "1"}, {"prompter", "1"},
    {"maskoracle", "1"}, {"mrl", "1"},      {"trainer", "1"}, {"cli", "1"}};

} // namespace

std::string git_blob_hash(const std::string& bytes)
{
    const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
    const std::string payload = header + bytes;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        throw Error("sha1 digest failed");
    return hex(digest, len);
}

std::string git_blob_hash_file(const std::filesystem::path& path)
{
    return git_blob_hash(read_all(path));
}

std::string content_hash(const std::vector<std::filesystem::path>& inputs)
{
    std::vector<std::filesystem::path> sorted = inputs;
    std::sort(sorted.begin(), sorted.end());
    std::string listing;
    for (const auto& p : sorted)
        listing += git_blob_hash_file(p) + " " + p.generic_string() + "\n";
    return git_blob_hash(listing);
}

std::string RunManifest::to_json() const
{
    nlohmann::ordered_json j;
    j["tool"] = "ws3d";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config_toml;
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [k, v] : seeds)
        s[k] = v;
    j["seeds"] = s;
    nlohmann::ordered_json mods = nlohmann::ordered_json::object();
    for (const auto& [k, v] : kModules)
        mods[k] = v;
    j["modules"] = mods;
    nlohmann::ordered_json in = nlohmann::ordered_json::array();
    for (const auto& p : inputs)
        in.push_back({{"path", p.generic_string()}, {"blob", git_blob_hash_file(p)}});
    j["inputs"] = in;
    j["inputs_hash"] = content_hash(inputs);
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& p : outputs)
        out.push_back(p.generic_string());
    j["outputs"] = out;
    return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    const std::string body = to_json();
    std::ofstream m(dir / "manifest.json", std::ios::binary);
    m << body;
    if (!config_toml.empty()) {
        std::ofstream c(dir / "config.toml", std::ios::binary);
        c << config_toml;
    }
    if (!m)
        throw Error("cannot write manifest in " + dir.string());
}

} // namespace ws3d
