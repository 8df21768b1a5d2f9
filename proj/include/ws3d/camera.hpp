#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <ws3d/geometry.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d {

/// Pinhole camera: intrinsics K (fx, fy, cx, cy), rigid world-to-camera
/// transform T, and the image size in pixels. `u` runs along the width
/// (columns), `v` along the height (rows).
struct Camera {
    Mat3 intrinsics = Mat3::identity();
    Mat4 extrinsics = Mat4::identity();
    int height = 1;
    int width = 1;

    static Camera from_pinhole(double fx, double fy, double cx, double cy, const Mat4& extrinsics,
                               int height, int width);

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }

    /// Throws ConfigError unless fx, fy > 0, the rotation block is
    /// orthonormal to 1e-9 and the image is non-empty.
    void validate() const;

    friend bool operator==(const Camera&, const Camera&) = default;
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// [u, v, 1]^T = (1/z) K T [x, y, z, 1]^T. Throws BehindCameraError when the
/// camera-space depth is not positive.
Projection project(const Vec3& point, const Camera& camera);
std::optional<Projection> try_project(const Vec3& point, const Camera& camera);

/// Inverse of `project` for a known depth.
Vec3 unproject(double u, double v, double depth, const Camera& camera);

/// Nearest pixel (row, column) of a projection.
inline std::pair<int, int> pixel_of(const Projection& p)
{
    return {static_cast<int>(std::lround(p.v)), static_cast<int>(std::lround(p.u))};
}

/// Image-plane buffers of a splatted scan plus the exact pixel -> point map.
struct RenderedView {
    Camera camera;
    std::vector<double> depth;              // +inf where empty
    std::vector<std::int32_t> point_index;  // -1 where empty
    std::vector<int> label_image;           // -1 where empty
    std::vector<int> instance_image;        // -1 where empty

    int height() const { return camera.height; }
    int width() const { return camera.width; }
    std::size_t pixel(int h, int w) const
    {
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(camera.width) +
               static_cast<std::size_t>(w);
    }
    bool in_bounds(int h, int w) const { return h >= 0 && w >= 0 && h < camera.height && w < camera.width; }

    friend bool operator==(const RenderedView&, const RenderedView&) = default;
};

/// Point-splat z-buffer rendering. Every point in front of the camera covers
/// the disc of `splat_radius` pixels around its projection; per pixel the
/// smallest depth wins, ties going to the lower point index.
RenderedView render(const LabeledScan& scan, const Camera& camera, int splat_radius = 1);
/// Single-threaded reference of `render`; output is identical.
RenderedView render_serial(const LabeledScan& scan, const Camera& camera, int splat_radius = 1);

/// Point indices under the given (row, column) pixels, empty pixels skipped,
/// sorted and de-duplicated. Throws std::out_of_range for pixels outside the
/// image.
std::vector<std::size_t> reproject_pixels(std::span<const std::pair<int, int>> pixels,
                                          const RenderedView& view);

/// `count == 1`: a top-down occlusal camera fitted so the scan's projected
/// extent is 90% of min(height, width). Further cameras are tilted around
/// the arch and fitted the same way.
std::vector<Camera> default_cameras(const LabeledScan& scan, int count, int height = 128,
                                    int width = 128);

} // namespace ws3d
