// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include <ws3d/kernels.hpp>
#include <ws3d/losses.hpp>

namespace {

using namespace ws3d;

Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (double& v : m.values())
        v = dist(rng);
    return m;
}

std::vector<Vec3> random_points(std::size_t n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-20.0, 20.0);
    std::vector<Vec3> pts(n);
    for (auto& p : pts)
        p = {dist(rng), dist(rng), dist(rng)};
    return pts;
}

struct Layer {
    Matrix weight;
    std::vector<double> bias;
    kernels::LinearView view() const { return {weight.values(), bias, weight.cols(), weight.rows()}; }
};

Layer random_layer(std::size_t in, std::size_t out)
{
    return {random_matrix(out, in, 7), std::vector<double>(out, 0.1)};
}

constexpr std::size_t kPoints = 4096;

template <auto Fn>
void bm_linear_forward(benchmark::State& state)
{
    const auto width = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(kPoints, width, 1);
    const Layer layer = random_layer(width, width);
    Matrix y;
    for (auto _ : state) {
        Fn(x, layer.view(), y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(kPoints * width * width));
}

template <auto Fn>
void bm_linear_backward_input(benchmark::State& state)
{
    const auto width = static_cast<std::size_t>(state.range(0));
    const Matrix dy = random_matrix(kPoints, width, 2);
    const Layer layer = random_layer(width, width);
    Matrix dx;
    for (auto _ : state) {
        Fn(dy, layer.view(), dx);
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(kPoints * width * width));
}

template <auto Fn>
void bm_linear_backward_params(benchmark::State& state)
{
    const auto width = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(kPoints, width, 3);
    const Matrix dy = random_matrix(kPoints, width, 4);
    std::vector<double> dw(width * width), db(width);
    for (auto _ : state) {
        Fn(x, dy, {dw, db});
        benchmark::DoNotOptimize(dw.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(kPoints * width * width));
}

template <auto Search>
void bm_knn(benchmark::State& state)
{
    const auto pts = random_points(kPoints, 5);
    for (auto _ : state) {
        auto table = Search(pts, pts, 16);
        benchmark::DoNotOptimize(table.indices.data());
    }
}

template <auto Search, auto Mean>
void bm_neighbor_mean(benchmark::State& state)
{
    const auto pts = random_points(kPoints, 6);
    const auto table = Search(pts, pts, 16);
    const Matrix h = random_matrix(kPoints, 64, 8);
    Matrix out;
    for (auto _ : state) {
        Mean(h, table, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void bm_contrastive(benchmark::State& state)
{
    const auto groups_count = static_cast<std::size_t>(state.range(0));
    std::vector<Matrix> groups;
    for (std::size_t g = 0; g < groups_count; ++g)
        groups.push_back(random_matrix(64, 32, 100 + static_cast<unsigned>(g)));
    for (auto _ : state) {
        auto r = contrastive_fg(groups, 0.1);
        benchmark::DoNotOptimize(r.value);
    }
}

} // namespace

BENCHMARK(bm_linear_forward<kernels::serial::linear_forward>)->Arg(32)->Arg(128);
BENCHMARK(bm_linear_forward<kernels::omp::linear_forward>)->Arg(32)->Arg(128);
BENCHMARK(bm_linear_backward_input<kernels::serial::linear_backward_input>)->Arg(32)->Arg(128);
BENCHMARK(bm_linear_backward_input<kernels::omp::linear_backward_input>)->Arg(32)->Arg(128);
BENCHMARK(bm_linear_backward_params<kernels::serial::linear_backward_params>)->Arg(32)->Arg(128);
BENCHMARK(bm_linear_backward_params<kernels::omp::linear_backward_params>)->Arg(32)->Arg(128);
BENCHMARK(bm_knn<kernels::serial::knn_search>);
BENCHMARK(bm_knn<kernels::omp::knn_search>);
BENCHMARK(bm_neighbor_mean<kernels::serial::knn_search, kernels::serial::neighbor_mean>);
BENCHMARK(bm_neighbor_mean<kernels::omp::knn_search, kernels::omp::neighbor_mean>);
BENCHMARK(bm_contrastive)->Arg(4)->Arg(14);

BENCHMARK_MAIN();
