#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include <ws3d/segnet.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d::test {

/// 4 teeth x 30 points + 80 gingiva points = 200 points.
inline JawConfig small_jaw(std::uint64_t seed)
{
    JawConfig c;
    c.num_teeth = 4;
    c.points_per_tooth = 30;
    c.gingiva_points = 80;
    c.seed = seed;
    return c;
}

inline LabeledScan small_scan(std::uint64_t seed) { return generate_jaw(small_jaw(seed)); }

inline LabeledScan default_scan(std::uint64_t seed)
{
    JawConfig c;
    c.seed = seed;
    return generate_jaw(c);
}

/// Logits of +10 on the true class, uniform confidence.
inline Prediction perfect_prediction(const LabeledScan& scan, double confidence = 0.9)
{
    Prediction p;
    p.logits = Matrix(scan.size(), static_cast<std::size_t>(scan.num_classes));
    for (std::size_t i = 0; i < scan.size(); ++i)
        p.logits(i, static_cast<std::size_t>(scan.class_labels[i])) = 10.0;
    p.confidence.assign(scan.size(), confidence);
    return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::atomic<int> counter{0};
        m_path = std::filesystem::temp_directory_path() /
                 ("ws3d_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(m_path);
        std::filesystem::create_directories(m_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

private:
    std::filesystem::path m_path;
};

} // namespace ws3d::test
