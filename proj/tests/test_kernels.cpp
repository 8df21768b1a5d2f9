#include <gtest/gtest.h>

#include <random>

#include <omp.h>

#include <ws3d/errors.hpp>
#include <ws3d/kernels.hpp>

using namespace ws3d;
namespace kn = ws3d::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double zero_fraction = 0.0)
{
    std::uniform_real_distribution<double> u(-1, 1), z(0, 1);
    Matrix m(r, c);
    for (double& v : m.values())
        v = z(rng) < zero_fraction ? 0.0 : u(rng);
    return m;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(n);
    for (double& x : v)
        x = u(rng);
    return v;
}

std::vector<Vec3> random_points(std::size_t n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<Vec3> p(n);
    for (Vec3& v : p)
        v = {u(rng), u(rng), u(rng)};
    return p;
}

class ThreadGuard {
public:
    explicit ThreadGuard(int n) : m_prev(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadGuard() { omp_set_num_threads(m_prev); }

private:
    int m_prev;
};

} // namespace

TEST(Kernels, LinearForwardMatchesDefinition)
{
    std::mt19937_64 rng(1);
    const Matrix x = random_matrix(7, 5, rng);
    const auto w = random_vec(3 * 5, rng), b = random_vec(3, rng);
    Matrix y;
    kn::serial::linear_forward(x, {w, b, 5, 3}, y);
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t o = 0; o < 3; ++o) {
            double acc = b[o];
            for (std::size_t i = 0; i < 5; ++i)
                acc += x(r, i) * w[o * 5 + i];
            EXPECT_NEAR(y(r, o), acc, 1e-14);
        }
}

TEST(Kernels, LinearBackwardMatchesDefinition)
{
    std::mt19937_64 rng(2);
    const Matrix x = random_matrix(6, 4, rng), dy = random_matrix(6, 3, rng);
    const auto w = random_vec(12, rng), b = random_vec(3, rng);
    Matrix dx;
    kn::serial::linear_backward_input(dy, {w, b, 4, 3}, dx);
    std::vector<double> gw(12, 0.0), gb(3, 0.0);
    kn::serial::linear_backward_params(x, dy, {gw, gb});
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < 3; ++o)
                acc += dy(r, o) * w[o * 4 + i];
            EXPECT_NEAR(dx(r, i), acc, 1e-14);
        }
    for (std::size_t o = 0; o < 3; ++o) {
        double bacc = 0.0;
        for (std::size_t r = 0; r < 6; ++r)
            bacc += dy(r, o);
        EXPECT_NEAR(gb[o], bacc, 1e-14);
        for (std::size_t i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (std::size_t r = 0; r < 6; ++r)
                acc += dy(r, o) * x(r, i);
            EXPECT_NEAR(gw[o * 4 + i], acc, 1e-14);
        }
    }
}

class SerialVsOmp : public ::testing::TestWithParam<int> {};

TEST_P(SerialVsOmp, LinearKernelsBitIdentical)
{
    ThreadGuard guard(GetParam());
    std::mt19937_64 rng(3);
    for (auto [n, in, out] : {std::tuple{1, 1, 1}, std::tuple{13, 7, 5}, std::tuple{257, 64, 64},
                              std::tuple{130, 128, 15}}) {
        const Matrix x = random_matrix(n, in, rng, 0.4), dy = random_matrix(n, out, rng, 0.3);
        const auto w = random_vec(in * out, rng), b = random_vec(out, rng);
        const kn::LinearView layer{w, b, static_cast<std::size_t>(in), static_cast<std::size_t>(out)};
        Matrix ys, yo, dxs, dxo;
        kn::serial::linear_forward(x, layer, ys);
        kn::omp::linear_forward(x, layer, yo);
        EXPECT_EQ(ys, yo);
        kn::serial::linear_backward_input(dy, layer, dxs);
        kn::omp::linear_backward_input(dy, layer, dxo);
        EXPECT_EQ(dxs, dxo);
        std::vector<double> gws(w.size(), 0.5), gbs(b.size(), 0.25), gwo = gws, gbo = gbs;
        kn::serial::linear_backward_params(x, dy, {gws, gbs});
        kn::omp::linear_backward_params(x, dy, {gwo, gbo});
        EXPECT_EQ(gws, gwo);
        EXPECT_EQ(gbs, gbo);
    }
}

TEST_P(SerialVsOmp, NeighborKernelsBitIdentical)
{
    ThreadGuard guard(GetParam());
    std::mt19937_64 rng(4);
    const auto pts = random_points(300, rng);
    const auto ts = kn::serial::knn_search(pts, pts, 16);
    const auto to = kn::omp::knn_search(pts, pts, 16);
    EXPECT_EQ(ts.indices, to.indices);
    EXPECT_EQ(ts.distances, to.distances);
    const Matrix h = random_matrix(300, 9, rng), d = random_matrix(300, 9, rng);
    Matrix ms, mo;
    kn::serial::neighbor_mean(h, ts, ms);
    kn::omp::neighbor_mean(h, ts, mo);
    EXPECT_EQ(ms, mo);
    Matrix dhs(300, 9), dho(300, 9);
    kn::serial::neighbor_mean_backward(d, ts, dhs);
    kn::omp::neighbor_mean_backward(d, ts, dho);
    EXPECT_EQ(dhs, dho);
}

INSTANTIATE_TEST_SUITE_P(Threads, SerialVsOmp, ::testing::Values(1, 2, 3, 8));

TEST(Kernels, KnnMatchesBruteForce)
{
    std::mt19937_64 rng(5);
    const auto ref = random_points(80, rng), q = random_points(30, rng);
    const auto table = kn::omp::knn_search(ref, q, 5);
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<std::pair<double, int>> all;
        for (std::size_t r = 0; r < ref.size(); ++r) {
            const Vec3 d = ref[r] - q[i];
            all.emplace_back(d.x * d.x + d.y * d.y + d.z * d.z, static_cast<int>(r));
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_EQ(table.of(i)[j], all[j].second);
            EXPECT_DOUBLE_EQ(table.distances[i * 5 + j], std::sqrt(all[j].first));
        }
    }
}

TEST(Kernels, KnnTieBreaksByIndex)
{
    const std::vector<Vec3> ref{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 5}};
    const std::vector<Vec3> q{{0, 0, 0}};
    const auto t = kn::serial::knn_search(ref, q, 3);
    EXPECT_EQ(std::vector<std::int32_t>(t.of(0).begin(), t.of(0).end()), (std::vector<std::int32_t>{0, 1, 2}));
}

TEST(Kernels, KnnErrors)
{
    const std::vector<Vec3> ref{{0, 0, 0}};
    EXPECT_THROW(kn::serial::knn_search(ref, ref, 2), DataError);
    EXPECT_THROW(kn::omp::knn_search(ref, ref, 0), ConfigError);
}

TEST(Kernels, NeighborMeanBackwardIsAdjoint)
{
    // <mean(h), d> == <h, mean^T(d)> for the pooling operator.
    std::mt19937_64 rng(6);
    const auto pts = random_points(50, rng);
    const auto t = kn::serial::knn_search(pts, pts, 4);
    const Matrix h = random_matrix(50, 3, rng), d = random_matrix(50, 3, rng);
    Matrix m, dh(50, 3);
    kn::serial::neighbor_mean(h, t, m);
    kn::serial::neighbor_mean_backward(d, t, dh);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < m.values().size(); ++i) {
        lhs += m.values()[i] * d.values()[i];
        rhs += h.values()[i] * dh.values()[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-12);
}
