#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include <ws3d/manifest.hpp>

#include "support.hpp"

using namespace ws3d;

namespace {

void write_file(const std::filesystem::path& p, const std::string& bytes)
{
    std::ofstream(p, std::ios::binary) << bytes;
}

} // namespace

// Reference ids as printed by `git hash-object`.
TEST(BlobHash, MatchesGit)
{
    EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    EXPECT_EQ(git_blob_hash(std::string("a\0b", 3)).size(), 40u);
}

TEST(BlobHash, FileAndContentHash)
{
    test::TempDir dir("manifest");
    write_file(dir / "a.txt", "hello\n");
    write_file(dir / "b.txt", "other");
    EXPECT_EQ(git_blob_hash_file(dir / "a.txt"), git_blob_hash("hello\n"));
    const std::string h1 = content_hash({dir / "a.txt", dir / "b.txt"});
    EXPECT_EQ(h1, content_hash({dir / "b.txt", dir / "a.txt"}));
    write_file(dir / "b.txt", "changed");
    EXPECT_NE(h1, content_hash({dir / "a.txt", dir / "b.txt"}));
}

TEST(Manifest, JsonLayoutAndFiles)
{
    test::TempDir dir("manifest");
    write_file(dir / "in.ws3d", "data");
    RunManifest m;
    m.command = "train";
    m.argv = {"ws3d", "train", "--out", "x"};
    m.config_toml = "[train]\nepochs = 3\n";
    m.seeds["train"] = 5;
    m.inputs = {dir / "in.ws3d"};
    m.outputs = {dir / "out" / "checkpoint.wsnn"};
    m.write(dir / "out");

    std::ifstream in(dir / "out" / "manifest.json");
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["tool"], "ws3d");
    EXPECT_EQ(j["version"], kVersion);
    EXPECT_EQ(j["command"], "train");
    EXPECT_EQ(j["argv"].size(), 4u);
    EXPECT_EQ(j["seeds"]["train"], 5);
    EXPECT_EQ(j["inputs"][0]["blob"], git_blob_hash("data"));
    EXPECT_EQ(j["inputs_hash"], content_hash(m.inputs));
    EXPECT_TRUE(j["modules"].contains("maskoracle"));
    EXPECT_EQ(j["outputs"].size(), 1u);

    std::ifstream cfg(dir / "out" / "config.toml");
    const std::string text((std::istreambuf_iterator<char>(cfg)), {});
    EXPECT_EQ(text, m.config_toml);
    EXPECT_EQ(m.to_json(), m.to_json());
}
