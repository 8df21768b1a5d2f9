#include <ws3d/camera.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <omp.h>

#include <ws3d/errors.hpp>

namespace ws3d {

Camera Camera::from_pinhole(double fx, double fy, double cx, double cy, const Mat4& extrinsics,
                            int height, int width)
{
    Camera cam;
    cam.intrinsics = {{fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0}};
    cam.extrinsics = extrinsics;
    cam.height = height;
    cam.width = width;
    return cam;
}

void Camera::validate() const
{
    if (!(fx() > 0.0 && fy() > 0.0))
        throw ConfigError("camera focal lengths must be positive");
    if (height < 1 || width < 1)
        throw ConfigError("camera image size must be at least 1x1");
    const Mat3 r = extrinsics.rotation();
    const Mat3 rtr = r.transposed() * r;
    double err = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double d = rtr(i, j) - (i == j ? 1.0 : 0.0);
            err += d * d;
        }
    if (!(std::sqrt(err) < 1e-9))
        throw ConfigError("camera rotation block is not orthonormal");
}

std::optional<Projection> try_project(const Vec3& point, const Camera& camera)
{
    const Vec3 cam = camera.extrinsics.transform_point(point);
    if (!(cam.z > 0.0))
        return std::nullopt;
    const Vec3 q = camera.intrinsics * cam;
    const double inv_z = 1.0 / cam.z;
    return Projection{q.x * inv_z, q.y * inv_z, cam.z};
}

Projection project(const Vec3& point, const Camera& camera)
{
    if (auto p = try_project(point, camera))
        return *p;
    throw BehindCameraError("point is not in front of the camera");
}

Vec3 unproject(double u, double v, double depth, const Camera& camera)
{
    // K is upper triangular: solve K x = [u, v, 1] by back substitution.
    const Mat3& k = camera.intrinsics;
    const double z = 1.0 / k(2, 2);
    const double y = (v - k(1, 2) * z) / k(1, 1);
    const double x = (u - k(0, 1) * y - k(0, 2) * z) / k(0, 0);
    const Vec3 cam = Vec3{x, y, z} * depth;
    return camera.extrinsics.rotation().transposed() * (cam - camera.extrinsics.translation());
}

namespace {

struct ZBuffer {
    std::vector<double> depth;
    std::vector<std::int32_t> index;

    ZBuffer(std::size_t pixels)
        : depth(pixels, std::numeric_limits<double>::infinity()), index(pixels, -1)
    {
    }

    // Strict (depth, index) ordering makes the buffer independent of the
    // order in which splats arrive.
    void offer(std::size_t p, double d, std::int32_t i)
    {
        if (d < depth[p] || (d == depth[p] && (index[p] < 0 || i < index[p]))) {
            depth[p] = d;
            index[p] = i;
        }
    }
};

void splat(const Camera& cam, const Vec3& point, std::int32_t idx, int radius, ZBuffer& zb)
{
    const auto proj = try_project(point, cam);
    if (!proj || !std::isfinite(proj->u) || !std::isfinite(proj->v))
        return;
    const double limit = 1e9;
    if (std::abs(proj->u) > limit || std::abs(proj->v) > limit)
        return;
    const auto [hc, wc] = pixel_of(*proj);
    const int r2 = radius * radius;
    for (int dh = -radius; dh <= radius; ++dh) {
        const int h = hc + dh;
        if (h < 0 || h >= cam.height)
            continue;
        for (int dw = -radius; dw <= radius; ++dw) {
            const int w = wc + dw;
            if (w < 0 || w >= cam.width || dh * dh + dw * dw > r2)
                continue;
            zb.offer(static_cast<std::size_t>(h) * static_cast<std::size_t>(cam.width) +
                         static_cast<std::size_t>(w),
                     proj->depth, idx);
        }
    }
}

RenderedView finish(const LabeledScan& scan, const Camera& camera, ZBuffer zb)
{
    RenderedView view;
    view.camera = camera;
    const std::size_t pixels = zb.depth.size();
    view.label_image.assign(pixels, -1);
    view.instance_image.assign(pixels, -1);
    for (std::size_t p = 0; p < pixels; ++p) {
        const std::int32_t i = zb.index[p];
        if (i < 0)
            continue;
        view.label_image[p] = scan.class_labels[static_cast<std::size_t>(i)];
        view.instance_image[p] = scan.instance_ids[static_cast<std::size_t>(i)];
    }
    view.depth = std::move(zb.depth);
    view.point_index = std::move(zb.index);
    return view;
}

std::size_t pixel_count(const Camera& c)
{
    return static_cast<std::size_t>(c.height) * static_cast<std::size_t>(c.width);
}

void check_render_args(const LabeledScan& scan, const Camera& camera, int splat_radius)
{
    camera.validate();
    if (splat_radius < 0)
        throw ConfigError("splat radius must be >= 0");
    if (scan.size() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
        throw DataError("scan too large to render");
}

} // namespace

RenderedView render_serial(const LabeledScan& scan, const Camera& camera, int splat_radius)
{
    check_render_args(scan, camera, splat_radius);
    ZBuffer zb(pixel_count(camera));
    for (std::size_t i = 0; i < scan.size(); ++i)
        splat(camera, scan.positions[i], static_cast<std::int32_t>(i), splat_radius, zb);
    return finish(scan, camera, std::move(zb));
}

RenderedView render(const LabeledScan& scan, const Camera& camera, int splat_radius)
{
    check_render_args(scan, camera, splat_radius);
    const std::size_t pixels = pixel_count(camera);
    const int threads = omp_get_max_threads();
    if (threads <= 1)
        return render_serial(scan, camera, splat_radius);

    std::vector<ZBuffer> partial(static_cast<std::size_t>(threads), ZBuffer(pixels));
    const auto n = static_cast<std::ptrdiff_t>(scan.size());
#pragma omp parallel num_threads(threads)
    {
        ZBuffer& zb = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            splat(camera, scan.positions[static_cast<std::size_t>(i)], static_cast<std::int32_t>(i),
                  splat_radius, zb);
    }
    ZBuffer merged(pixels);
    for (const ZBuffer& zb : partial)
        for (std::size_t p = 0; p < pixels; ++p)
            if (zb.index[p] >= 0)
                merged.offer(p, zb.depth[p], zb.index[p]);
    return finish(scan, camera, std::move(merged));
}

std::vector<std::size_t> reproject_pixels(std::span<const std::pair<int, int>> pixels,
                                          const RenderedView& view)
{
    std::vector<std::size_t> out;
    out.reserve(pixels.size());
    for (const auto& [h, w] : pixels) {
        if (!view.in_bounds(h, w))
            throw std::out_of_range("pixel (" + std::to_string(h) + ", " + std::to_string(w) +
                                    ") outside the " + std::to_string(view.height()) + "x" +
                                    std::to_string(view.width()) + " view");
        const std::int32_t idx = view.point_index[view.pixel(h, w)];
        if (idx >= 0)
            out.push_back(static_cast<std::size_t>(idx));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace {

// Chooses focal length and principal point so the projected bounding extent
// of the scan is `fill` of min(height, width), centred in the image.
Camera fit_camera(const LabeledScan& scan, const Mat4& extrinsics, int height, int width, double fill)
{
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    const Camera unit = Camera::from_pinhole(1.0, 1.0, 0.0, 0.0, extrinsics, height, width);
    for (const Vec3& p : scan.positions) {
        const Projection q = project(p, unit);
        umin = std::min(umin, q.u);
        umax = std::max(umax, q.u);
        vmin = std::min(vmin, q.v);
        vmax = std::max(vmax, q.v);
    }
    const double extent = std::max({umax - umin, vmax - vmin, 1e-12});
    const double f = fill * std::min(height, width) / extent;
    const double cx = 0.5 * (width - 1) - f * 0.5 * (umin + umax);
    const double cy = 0.5 * (height - 1) - f * 0.5 * (vmin + vmax);
    return Camera::from_pinhole(f, f, cx, cy, extrinsics, height, width);
}

} // namespace

std::vector<Camera> default_cameras(const LabeledScan& scan, int count, int height, int width)
{
    if (count < 1)
        throw ConfigError("camera count must be >= 1");
    if (scan.size() == 0)
        throw DataError("cannot fit cameras to an empty scan");
    Vec3 lo = scan.positions.front(), hi = lo;
    for (const Vec3& p : scan.positions) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Vec3 center = (lo + hi) * 0.5;
    const double size = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-6});
    const double distance = 3.0 * size;

    // Looking down -z with image rows along -y.
    const Mat3 top_down{{1, 0, 0, 0, -1, 0, 0, 0, -1}};
    const double tilt = 30.0 * std::numbers::pi / 180.0;

    std::vector<Camera> cameras;
    cameras.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Mat3 tilt_rot = Mat3::identity();
        if (i > 0) {
            const double azimuth = 2.0 * std::numbers::pi * (i - 1) / std::max(1, count - 1);
            tilt_rot = axis_angle({std::cos(azimuth), std::sin(azimuth), 0.0}, tilt);
        }
        const Mat3 rotation = top_down * tilt_rot.transposed();
        const Vec3 position = center + tilt_rot * Vec3{0.0, 0.0, distance};
        const Mat4 extrinsics = Mat4::rigid(rotation, (rotation * position) * -1.0);
        cameras.push_back(fit_camera(scan, extrinsics, height, width, 0.9));
    }
    return cameras;
}

} // namespace ws3d
