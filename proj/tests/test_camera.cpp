#include <gtest/gtest.h>

#include <random>
#include <set>

#include <ws3d/camera.hpp>
#include <ws3d/errors.hpp>

#include "oracles.hpp"
#include "support.hpp"

using namespace ws3d;

namespace {

Camera identity_camera(int h = 128, int w = 128)
{
    return Camera::from_pinhole(1.0, 1.0, 0.0, 0.0, Mat4::identity(), h, w);
}

LabeledScan points_scan(const std::vector<Vec3>& pts, const std::vector<int>& labels)
{
    LabeledScan s;
    s.positions = pts;
    s.class_labels = labels;
    s.instance_ids = labels;
    s.num_classes = 1 + *std::max_element(labels.begin(), labels.end());
    return s;
}

} // namespace

TEST(Project, IdentityCamera)
{
    const Projection p = project({0, 0, 1}, identity_camera());
    EXPECT_EQ(p.u, 0.0);
    EXPECT_EQ(p.v, 0.0);
    EXPECT_EQ(p.depth, 1.0);
    const Projection q = project({2, 3, 2}, identity_camera());
    EXPECT_EQ(q.u, 1.0);
    EXPECT_EQ(q.v, 1.5);
    EXPECT_EQ(q.depth, 2.0);
}

TEST(Project, HandMultipliedIntrinsics)
{
    const Camera cam = Camera::from_pinhole(100, 100, 64, 64, Mat4::identity(), 128, 128);
    const Projection p = project({0.1, -0.2, 1.0}, cam);
    EXPECT_NEAR(p.u, 74.0, 1e-12);
    EXPECT_NEAR(p.v, 44.0, 1e-12);
    EXPECT_EQ(p.depth, 1.0);
}

TEST(Project, BehindCamera)
{
    EXPECT_THROW(project({0, 0, -1}, identity_camera()), BehindCameraError);
    EXPECT_THROW(project({0, 0, 0}, identity_camera()), BehindCameraError);
    EXPECT_FALSE(try_project({1, 1, -2}, identity_camera()).has_value());
}

TEST(Project, RoundTrip)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    const Mat4 t = Mat4::rigid(axis_angle({0.3, -0.5, 0.8}, 0.7), {0.5, -1.0, 10.0});
    const Camera cam = Camera::from_pinhole(320, 300, 64, 60, t, 128, 128);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p{5 * u(rng), 5 * u(rng), 5 * u(rng)};
        const Projection pr = project(p, cam);
        const Vec3 back = unproject(pr.u, pr.v, pr.depth, cam);
        EXPECT_LE(norm(back - p), 1e-9 * std::max(1.0, norm(p)));
    }
}

TEST(Camera, ValidateRejectsBadCameras)
{
    EXPECT_THROW(Camera::from_pinhole(0, 1, 0, 0, Mat4::identity(), 4, 4).validate(), ConfigError);
    Mat4 skew = Mat4::identity();
    skew(0, 1) = 0.1;
    EXPECT_THROW(Camera::from_pinhole(1, 1, 0, 0, skew, 4, 4).validate(), ConfigError);
    EXPECT_THROW(Camera::from_pinhole(1, 1, 0, 0, Mat4::identity(), 0, 4).validate(), ConfigError);
}

TEST(Render, SinglePointRadiusZero)
{
    const Camera cam = Camera::from_pinhole(10, 10, 4, 4, Mat4::identity(), 9, 9);
    const RenderedView v = render(points_scan({{0, 0, 1}}, {1}), cam, 0);
    int set = 0;
    for (std::size_t p = 0; p < v.point_index.size(); ++p)
        if (v.point_index[p] >= 0) {
            ++set;
            EXPECT_EQ(p, v.pixel(4, 4));
            EXPECT_EQ(v.point_index[p], 0);
            EXPECT_EQ(v.label_image[p], 1);
        }
    EXPECT_EQ(set, 1);
}

TEST(Render, NearerPointWins)
{
    const Camera cam = Camera::from_pinhole(10, 10, 4, 4, Mat4::identity(), 9, 9);
    const RenderedView v = render(points_scan({{0, 0, 2}, {0, 0, 1}}, {1, 2}), cam, 0);
    EXPECT_EQ(v.point_index[v.pixel(4, 4)], 1);
    EXPECT_EQ(v.depth[v.pixel(4, 4)], 1.0);
    EXPECT_EQ(v.label_image[v.pixel(4, 4)], 2);
}

TEST(Render, DepthTieGoesToLowerIndex)
{
    const Camera cam = Camera::from_pinhole(10, 10, 4, 4, Mat4::identity(), 9, 9);
    const RenderedView v = render(points_scan({{0, 0, 1}, {0, 0, 1}}, {2, 1}), cam, 0);
    EXPECT_EQ(v.point_index[v.pixel(4, 4)], 0);
}

TEST(Render, BuffersConsistent)
{
    const LabeledScan s = test::default_scan(2);
    const RenderedView v = render(s, default_cameras(s, 1)[0], 1);
    for (std::size_t p = 0; p < v.depth.size(); ++p) {
        EXPECT_EQ(v.point_index[p] >= 0, std::isfinite(v.depth[p]));
        if (v.point_index[p] >= 0) {
            EXPECT_EQ(v.label_image[p], s.class_labels[static_cast<std::size_t>(v.point_index[p])]);
            EXPECT_EQ(v.instance_image[p], s.instance_ids[static_cast<std::size_t>(v.point_index[p])]);
        } else {
            EXPECT_EQ(v.label_image[p], -1);
        }
    }
}

TEST(Render, MatchesBruteForceZBuffer)
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const LabeledScan s = test::small_scan(seed);
        const Camera cam = default_cameras(s, 2, 48, 64)[seed % 2];
        for (int radius : {0, 1, 2}) {
            const RenderedView v = render(s, cam, radius);
            const auto brute = oracle::zbuffer(s, cam, radius);
            EXPECT_EQ(v.point_index, brute.index);
            EXPECT_EQ(v.depth, brute.depth);
        }
    }
}

TEST(Render, SerialAndParallelIdentical)
{
    const LabeledScan s = test::default_scan(5);
    for (const Camera& cam : default_cameras(s, 3))
        EXPECT_EQ(render(s, cam, 1), render_serial(s, cam, 1));
}

TEST(Render, EveryToothVisibleFromDefaultCamera)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const LabeledScan s = test::default_scan(seed);
        const RenderedView v = render(s, default_cameras(s, 1)[0], 1);
        std::set<int> seen(v.label_image.begin(), v.label_image.end());
        for (int c = 0; c < s.num_classes; ++c)
            EXPECT_TRUE(seen.count(c)) << "class " << c << " seed " << seed;
    }
}

TEST(Reproject, SinglePoint)
{
    const Camera cam = Camera::from_pinhole(10, 10, 4, 4, Mat4::identity(), 9, 9);
    const RenderedView v = render(points_scan({{0, 0, 1}, {0.3, 0.3, 1}}, {1, 2}), cam, 0);
    const std::vector<std::pair<int, int>> px{{4, 4}, {4, 4}};
    EXPECT_EQ(reproject_pixels(px, v), (std::vector<std::size_t>{0}));
    const std::vector<std::pair<int, int>> empty{{0, 0}, {8, 0}};
    EXPECT_TRUE(reproject_pixels(empty, v).empty());
    const std::vector<std::pair<int, int>> oob{{9, 0}};
    EXPECT_THROW(reproject_pixels(oob, v), std::out_of_range);
}

TEST(Reproject, IsolatedPointsRoundTrip)
{
    std::vector<Vec3> pts;
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            pts.push_back({(i - 2) * 0.4, (j - 2) * 0.4, 1.0});
            labels.push_back(1);
        }
    const Camera cam = Camera::from_pinhole(10, 10, 12, 12, Mat4::identity(), 25, 25);
    const LabeledScan s = points_scan(pts, labels);
    const RenderedView v = render(s, cam, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto px = pixel_of(project(pts[i], cam));
        const std::vector<std::pair<int, int>> one{px};
        EXPECT_EQ(reproject_pixels(one, v), (std::vector<std::size_t>{i}));
    }
}

TEST(Reproject, ToothFootprintIsPure)
{
    const LabeledScan s = test::default_scan(6);
    const RenderedView v = render(s, default_cameras(s, 1)[0], 1);
    for (int k = 1; k <= 14; ++k) {
        std::vector<std::pair<int, int>> px;
        for (int h = 0; h < v.height(); ++h)
            for (int w = 0; w < v.width(); ++w)
                if (v.instance_image[v.pixel(h, w)] == k)
                    px.emplace_back(h, w);
        const auto idx = reproject_pixels(px, v);
        EXPECT_FALSE(idx.empty());
        for (std::size_t i : idx)
            EXPECT_EQ(s.instance_ids[i], k);
    }
}

TEST(DefaultCameras, AllPointsInBoundsAndFitted)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const LabeledScan s = test::default_scan(seed);
        const auto cams = default_cameras(s, 1);
        ASSERT_EQ(cams.size(), 1u);
        double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
        for (const Vec3& p : s.positions) {
            const Projection pr = project(p, cams[0]);
            EXPECT_GE(pr.u, -0.5);
            EXPECT_LT(pr.u, 127.5);
            EXPECT_GE(pr.v, -0.5);
            EXPECT_LT(pr.v, 127.5);
            umin = std::min(umin, pr.u);
            umax = std::max(umax, pr.u);
            vmin = std::min(vmin, pr.v);
            vmax = std::max(vmax, pr.v);
        }
        const double extent = std::max(umax - umin, vmax - vmin);
        EXPECT_GE(extent, 0.85 * 128);
        EXPECT_LE(extent, 0.95 * 128);
    }
}

TEST(DefaultCameras, DistinctExtrinsics)
{
    const LabeledScan s = test::default_scan(0);
    const auto cams = default_cameras(s, 3);
    ASSERT_EQ(cams.size(), 3u);
    EXPECT_FALSE(cams[0].extrinsics == cams[1].extrinsics);
    EXPECT_FALSE(cams[0].extrinsics == cams[2].extrinsics);
    EXPECT_FALSE(cams[1].extrinsics == cams[2].extrinsics);
    for (const Camera& c : cams)
        EXPECT_NO_THROW(c.validate());
}
