#include <ws3d/kernels.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels_common.hpp"

namespace ws3d::kernels::serial {

void linear_forward(const Matrix& x, const LinearView& layer, Matrix& y)
{
    const std::vector<double> wt = detail::transpose(layer.weight, layer.out, layer.in);
    y = Matrix(x.rows(), layer.out);
    for (std::size_t b = 0; b < detail::block_count(x.rows()); ++b)
        detail::forward_block(x, wt, layer.bias, y, b * detail::kBlock);
}

void linear_backward_input(const Matrix& dy, const LinearView& layer, Matrix& dx)
{
    dx = Matrix(dy.rows(), layer.in);
    for (std::size_t b = 0; b < detail::block_count(dy.rows()); ++b)
        detail::backward_input_block(dy, layer.weight, dx, b * detail::kBlock);
}

void linear_backward_params(const Matrix& x, const Matrix& dy, const LinearGradView& grad)
{
    for (std::size_t b = 0; b < detail::block_count(dy.cols()); ++b)
        detail::backward_params_block(x, dy, grad, b * detail::kBlock);
}

void neighbor_mean(const Matrix& h, const NeighborTable& nbrs, Matrix& out)
{
    out = Matrix(h.rows(), h.cols());
    for (std::size_t r = 0; r < h.rows(); ++r)
        detail::mean_row(h, nbrs.of(r), out.row(r));
}

void neighbor_mean_backward(const Matrix& d_out, const NeighborTable& nbrs, Matrix& dh)
{
    const double scale = 1.0 / static_cast<double>(nbrs.k);
    const std::size_t c = d_out.cols();
    for (std::size_t r = 0; r < d_out.rows(); ++r) {
        const auto g = d_out.row(r);
        for (const std::int32_t j : nbrs.of(r)) {
            auto d = dh.row(static_cast<std::size_t>(j));
            for (std::size_t ch = 0; ch < c; ++ch)
                d[ch] += g[ch] * scale;
        }
    }
}

NeighborTable knn_search(std::span<const Vec3> reference, std::span<const Vec3> queries,
                         std::size_t k)
{
    NeighborTable table = detail::make_table(reference.size(), queries.size(), k);
    std::vector<std::int32_t> order(reference.size());
    std::vector<double> d2(reference.size());
    for (std::size_t q = 0; q < queries.size(); ++q)
        detail::knn_query(reference, queries[q], table, q, order, d2);
    return table;
}

} // namespace ws3d::kernels::serial
