#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <ws3d/geometry.hpp>

namespace ws3d {

/// Parameters of a synthetic jaw: teeth are ellipsoids spaced along a
/// semicircular arch, sitting on a noisy gingiva band.
struct JawConfig {
    int num_teeth = 14;
    int points_per_tooth = 100;
    int gingiva_points = 600;
    double arch_radius = 30.0;
    Vec3 tooth_scale{2.2, 2.2, 3.0};
    double jitter_sigma = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// A point cloud with per-point class and instance labels. Class 0 is
/// gingiva; classes 1..K are teeth, and every tooth is its own instance.
///
/// Positions and normals hold values exactly representable in float so that
/// the on-disk container round-trips bit-for-bit.
struct LabeledScan {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    std::vector<int> class_labels;
    std::vector<int> instance_ids;
    int num_classes = 0; // K + 1

    std::size_t size() const noexcept { return positions.size(); }
    int num_teeth() const noexcept { return num_classes - 1; }

    /// Throws DataError when any documented invariant is broken.
    void validate() const;

    friend bool operator==(const LabeledScan&, const LabeledScan&) = default;
};

/// Indices of the few labelled points used for supervision.
struct SparseLabelMask {
    std::vector<std::size_t> labeled_indices;
    int per_tooth = 1;
};

LabeledScan generate_jaw(const JawConfig& config);

/// Uniformly samples `per_tooth` points of every tooth class (and
/// `background_count` gingiva points, zero by default).
SparseLabelMask sample_sparse_labels(const LabeledScan& scan, int per_tooth, std::uint64_t seed,
                                     int background_count = 0);

/// Fraction of the scan carrying a label.
double labeled_fraction(const LabeledScan& scan, const SparseLabelMask& mask);

/// Binary "WS3D" container, version 1.
inline constexpr std::uint8_t kScanFormatVersion = 1;

void save_scan(const LabeledScan& scan, const std::filesystem::path& path);
LabeledScan load_scan(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_scan(const LabeledScan& scan);
LabeledScan decode_scan(const std::vector<std::uint8_t>& bytes);

} // namespace ws3d
