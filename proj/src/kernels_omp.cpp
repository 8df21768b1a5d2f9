#include <ws3d/kernels.hpp>

#include <omp.h>

#include "kernels_common.hpp"

namespace ws3d::kernels::omp {

namespace {
using Index = std::ptrdiff_t;
}

void linear_forward(const Matrix& x, const LinearView& layer, Matrix& y)
{
    const std::vector<double> wt = detail::transpose(layer.weight, layer.out, layer.in);
    y = Matrix(x.rows(), layer.out);
    const Index blocks = static_cast<Index>(detail::block_count(x.rows()));
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < blocks; ++b)
        detail::forward_block(x, wt, layer.bias, y, static_cast<std::size_t>(b) * detail::kBlock);
}

void linear_backward_input(const Matrix& dy, const LinearView& layer, Matrix& dx)
{
    dx = Matrix(dy.rows(), layer.in);
    const Index blocks = static_cast<Index>(detail::block_count(dy.rows()));
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < blocks; ++b)
        detail::backward_input_block(dy, layer.weight, dx, static_cast<std::size_t>(b) * detail::kBlock);
}

// Parallel over blocks of output units: every dW row is owned by one thread
// and accumulated over the batch rows in increasing order.
void linear_backward_params(const Matrix& x, const Matrix& dy, const LinearGradView& grad)
{
    const Index blocks = static_cast<Index>(detail::block_count(dy.cols()));
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < blocks; ++b)
        detail::backward_params_block(x, dy, grad, static_cast<std::size_t>(b) * detail::kBlock);
}

void neighbor_mean(const Matrix& h, const NeighborTable& nbrs, Matrix& out)
{
    out = Matrix(h.rows(), h.cols());
    const Index n = static_cast<Index>(h.rows());
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < n; ++r)
        detail::mean_row(h, nbrs.of(static_cast<std::size_t>(r)), out.row(static_cast<std::size_t>(r)));
}

// Parallel over channels so every dh element receives its contributions in
// the same row order as the serial scatter.
void neighbor_mean_backward(const Matrix& d_out, const NeighborTable& nbrs, Matrix& dh)
{
    const double scale = 1.0 / static_cast<double>(nbrs.k);
    const Index c = static_cast<Index>(d_out.cols());
#pragma omp parallel for schedule(static)
    for (Index ch = 0; ch < c; ++ch) {
        const auto col = static_cast<std::size_t>(ch);
        for (std::size_t r = 0; r < d_out.rows(); ++r) {
            const double g = d_out(r, col) * scale;
            for (const std::int32_t j : nbrs.of(r))
                dh(static_cast<std::size_t>(j), col) += g;
        }
    }
}

NeighborTable knn_search(std::span<const Vec3> reference, std::span<const Vec3> queries,
                         std::size_t k)
{
    NeighborTable table = detail::make_table(reference.size(), queries.size(), k);
    const Index nq = static_cast<Index>(queries.size());
#pragma omp parallel
    {
        std::vector<std::int32_t> order(reference.size());
        std::vector<double> d2(reference.size());
#pragma omp for schedule(static)
        for (Index q = 0; q < nq; ++q)
            detail::knn_query(reference, queries[static_cast<std::size_t>(q)], table,
                              static_cast<std::size_t>(q), order, d2);
    }
    return table;
}

} // namespace ws3d::kernels::omp
