#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <ws3d/errors.hpp>
#include <ws3d/synthgen.hpp>

#include "support.hpp"

using namespace ws3d;

TEST(Synthgen, DefaultScanHasAllClasses)
{
    JawConfig c;
    c.seed = 7;
    const LabeledScan scan = generate_jaw(c);
    EXPECT_EQ(scan.size(), 2000u);
    EXPECT_EQ(scan.num_classes, 15);
    std::set<int> classes(scan.class_labels.begin(), scan.class_labels.end());
    EXPECT_EQ(classes.size(), 15u);
    EXPECT_NO_THROW(scan.validate());
}

TEST(Synthgen, Deterministic)
{
    EXPECT_EQ(test::default_scan(7), test::default_scan(7));
}

TEST(Synthgen, SeedsDiffer)
{
    const LabeledScan a = test::default_scan(7), b = test::default_scan(8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size() && !differs; ++i)
        differs = a.positions[i] != b.positions[i];
    EXPECT_TRUE(differs);
}

TEST(Synthgen, InstancesMatchClasses)
{
    const LabeledScan s = test::default_scan(3);
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_EQ(s.instance_ids[i], s.class_labels[i]);
}

TEST(Synthgen, ToothCentresSeparated)
{
    const LabeledScan s = test::default_scan(11);
    std::vector<Vec3> centre(15);
    std::vector<int> count(15, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        centre[static_cast<std::size_t>(s.class_labels[i])] += s.positions[i];
        ++count[static_cast<std::size_t>(s.class_labels[i])];
    }
    const JawConfig c;
    const double axis = std::max({c.tooth_scale.x, c.tooth_scale.y, c.tooth_scale.z});
    for (int a = 1; a < 15; ++a)
        for (int b = a + 1; b < 15; ++b) {
            const Vec3 ca = centre[a] * (1.0 / count[a]), cb = centre[b] * (1.0 / count[b]);
            EXPECT_GT(norm(ca - cb), 2.0 * axis * 0.5) << a << " " << b;
        }
}

TEST(Synthgen, InvalidConfig)
{
    JawConfig c;
    c.num_teeth = 0;
    EXPECT_THROW(generate_jaw(c), ConfigError);
    c = JawConfig{};
    c.jitter_sigma = -1.0;
    EXPECT_THROW(generate_jaw(c), ConfigError);
    c = JawConfig{};
    c.points_per_tooth = 0;
    EXPECT_THROW(generate_jaw(c), ConfigError);
    c = JawConfig{};
    c.arch_radius = 3.0; // teeth would overlap
    EXPECT_THROW(generate_jaw(c), ConfigError);
}

TEST(SparseLabels, OnePerTooth)
{
    const LabeledScan s = test::default_scan(1);
    const SparseLabelMask m = sample_sparse_labels(s, 1, 5);
    ASSERT_EQ(m.labeled_indices.size(), 14u);
    std::set<int> seen;
    for (std::size_t i : m.labeled_indices)
        seen.insert(s.class_labels[i]);
    EXPECT_EQ(seen.size(), 14u);
    EXPECT_EQ(seen.count(0), 0u);
    EXPECT_NEAR(labeled_fraction(s, m), 14.0 / 2000.0, 1e-15);
}

TEST(SparseLabels, TwoPerTooth)
{
    const LabeledScan s = test::default_scan(1);
    const SparseLabelMask m = sample_sparse_labels(s, 2, 5);
    ASSERT_EQ(m.labeled_indices.size(), 28u);
    std::vector<int> per(15, 0);
    for (std::size_t i : m.labeled_indices)
        ++per[static_cast<std::size_t>(s.class_labels[i])];
    for (int c = 1; c < 15; ++c)
        EXPECT_EQ(per[static_cast<std::size_t>(c)], 2);
    std::set<std::size_t> unique(m.labeled_indices.begin(), m.labeled_indices.end());
    EXPECT_EQ(unique.size(), 28u);
}

TEST(SparseLabels, DeterministicPerSeed)
{
    const LabeledScan s = test::default_scan(1);
    EXPECT_EQ(sample_sparse_labels(s, 1, 9).labeled_indices, sample_sparse_labels(s, 1, 9).labeled_indices);
    EXPECT_NE(sample_sparse_labels(s, 3, 9).labeled_indices, sample_sparse_labels(s, 3, 10).labeled_indices);
}

TEST(SparseLabels, TooFewPoints)
{
    JawConfig c = test::small_jaw(2);
    c.points_per_tooth = 3;
    const LabeledScan s = generate_jaw(c);
    EXPECT_THROW(sample_sparse_labels(s, 4, 0), DataError);
}

TEST(SparseLabels, BackgroundOptIn)
{
    const LabeledScan s = test::small_scan(2);
    const SparseLabelMask m = sample_sparse_labels(s, 1, 0, 3);
    int bg = 0;
    for (std::size_t i : m.labeled_indices)
        bg += s.class_labels[i] == 0;
    EXPECT_EQ(bg, 3);
}

TEST(ScanFile, RoundTrip)
{
    test::TempDir dir("scan");
    const LabeledScan s = test::default_scan(4);
    save_scan(s, dir / "a.ws3d");
    EXPECT_EQ(load_scan(dir / "a.ws3d"), s);
}

TEST(ScanFile, TruncatedIsFormatError)
{
    const auto bytes = encode_scan(test::small_scan(1));
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(decode_scan(part), FormatError) << cut;
    }
}

TEST(ScanFile, TruncationOffsetReported)
{
    auto bytes = encode_scan(test::small_scan(1));
    bytes.resize(20);
    try {
        decode_scan(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_LE(e.offset(), 20u);
    }
}

TEST(ScanFile, VersionMismatch)
{
    auto bytes = encode_scan(test::small_scan(1));
    bytes[4] = 2;
    EXPECT_THROW(decode_scan(bytes), UnsupportedVersionError);
}

TEST(ScanFile, BadMagicAndTrailingBytes)
{
    auto bytes = encode_scan(test::small_scan(1));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_scan(bad), FormatError);
    bytes.push_back(0);
    EXPECT_THROW(decode_scan(bytes), FormatError);
}

TEST(ScanFile, HeaderLayout)
{
    const auto bytes = encode_scan(test::small_scan(1));
    ASSERT_GE(bytes.size(), 11u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "WS3D");
    EXPECT_EQ(bytes[4], 1);
    const std::uint32_t n = bytes[5] | bytes[6] << 8 | bytes[7] << 16 | static_cast<std::uint32_t>(bytes[8]) << 24;
    EXPECT_EQ(n, 200u);
    EXPECT_EQ(bytes[9] | bytes[10] << 8, 4);
    EXPECT_EQ(bytes.size(), 11u + 200u * (12 + 12 + 2 + 2));
}
