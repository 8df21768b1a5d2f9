#pragma once

// Row-level building blocks shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <ws3d/errors.hpp>
#include <ws3d/kernels.hpp>

namespace ws3d::kernels::detail {

inline std::vector<double> transpose(std::span<const double> w, std::size_t rows, std::size_t cols)
{
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            t[c * rows + r] = w[r * cols + c];
    return t;
}

inline constexpr std::size_t kBlock = 4;

inline std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

// Rows [r0, r0 + 4) of y = b + x wt, each element accumulated over
// increasing i. Four rows share every load of wt.
inline void forward_block(const Matrix& x, const std::vector<double>& wt, std::span<const double> bias,
                          Matrix& y, std::size_t r0)
{
    const std::size_t in = x.cols(), out = y.cols();
    const std::size_t r1 = std::min(r0 + kBlock, x.rows());
    for (std::size_t r = r0; r < r1; ++r)
        std::copy(bias.begin(), bias.end(), y.row(r).begin());
    if (r1 - r0 < kBlock) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* xr = x.row(r).data();
            double* __restrict yr = y.row(r).data();
            for (std::size_t i = 0; i < in; ++i) {
                if (xr[i] == 0.0)
                    continue;
                const double* w = wt.data() + i * out;
                for (std::size_t o = 0; o < out; ++o)
                    yr[o] += xr[i] * w[o];
            }
        }
        return;
    }
    const double* x0 = x.row(r0).data();
    const double* x1 = x.row(r0 + 1).data();
    const double* x2 = x.row(r0 + 2).data();
    const double* x3 = x.row(r0 + 3).data();
    double* __restrict y0 = y.row(r0).data();
    double* __restrict y1 = y.row(r0 + 1).data();
    double* __restrict y2 = y.row(r0 + 2).data();
    double* __restrict y3 = y.row(r0 + 3).data();
    for (std::size_t i = 0; i < in; ++i) {
        const double a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
        if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0)
            continue;
        const double* __restrict w = wt.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double wo = w[o];
            y0[o] += a0 * wo;
            y1[o] += a1 * wo;
            y2[o] += a2 * wo;
            y3[o] += a3 * wo;
        }
    }
}

// Rows [r0, r0 + 4) of dx = dy W, accumulated over increasing o.
inline void backward_input_block(const Matrix& dy, std::span<const double> weight, Matrix& dx,
                                 std::size_t r0)
{
    const std::size_t in = dx.cols(), out = dy.cols();
    const std::size_t r1 = std::min(r0 + kBlock, dy.rows());
    if (r1 - r0 < kBlock) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* g = dy.row(r).data();
            double* __restrict d = dx.row(r).data();
            for (std::size_t o = 0; o < out; ++o) {
                if (g[o] == 0.0)
                    continue;
                const double* w = weight.data() + o * in;
                for (std::size_t i = 0; i < in; ++i)
                    d[i] += g[o] * w[i];
            }
        }
        return;
    }
    const double* g0 = dy.row(r0).data();
    const double* g1 = dy.row(r0 + 1).data();
    const double* g2 = dy.row(r0 + 2).data();
    const double* g3 = dy.row(r0 + 3).data();
    double* __restrict d0 = dx.row(r0).data();
    double* __restrict d1 = dx.row(r0 + 1).data();
    double* __restrict d2 = dx.row(r0 + 2).data();
    double* __restrict d3 = dx.row(r0 + 3).data();
    for (std::size_t o = 0; o < out; ++o) {
        const double a0 = g0[o], a1 = g1[o], a2 = g2[o], a3 = g3[o];
        if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0)
            continue;
        const double* __restrict w = weight.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double wi = w[i];
            d0[i] += a0 * wi;
            d1[i] += a1 * wi;
            d2[i] += a2 * wi;
            d3[i] += a3 * wi;
        }
    }
}

// Output units [o0, o0 + 4) of dW += dyᵀ x and db += colsum(dy), each
// element accumulated over increasing rows.
inline void backward_params_block(const Matrix& x, const Matrix& dy, const LinearGradView& grad,
                                  std::size_t o0)
{
    const std::size_t n = x.rows(), in = x.cols(), out = dy.cols();
    const std::size_t o1 = std::min(o0 + kBlock, out);
    if (o1 - o0 < kBlock) {
        for (std::size_t o = o0; o < o1; ++o) {
            double* __restrict w = grad.weight.data() + o * in;
            for (std::size_t r = 0; r < n; ++r) {
                const double go = dy(r, o);
                if (go == 0.0)
                    continue;
                const double* xr = x.row(r).data();
                for (std::size_t i = 0; i < in; ++i)
                    w[i] += go * xr[i];
                grad.bias[o] += go;
            }
        }
        return;
    }
    double* __restrict w0 = grad.weight.data() + o0 * in;
    double* __restrict w1 = w0 + in;
    double* __restrict w2 = w1 + in;
    double* __restrict w3 = w2 + in;
    for (std::size_t r = 0; r < n; ++r) {
        const double* g = dy.row(r).data() + o0;
        const double a0 = g[0], a1 = g[1], a2 = g[2], a3 = g[3];
        if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0)
            continue;
        const double* __restrict xr = x.row(r).data();
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            w0[i] += a0 * xi;
            w1[i] += a1 * xi;
            w2[i] += a2 * xi;
            w3[i] += a3 * xi;
        }
        grad.bias[o0] += a0;
        grad.bias[o0 + 1] += a1;
        grad.bias[o0 + 2] += a2;
        grad.bias[o0 + 3] += a3;
    }
}

inline void mean_row(const Matrix& h, std::span<const std::int32_t> nbrs, std::span<double> out)
{
    const double scale = 1.0 / static_cast<double>(nbrs.size());
    for (const std::int32_t j : nbrs) {
        const auto src = h.row(static_cast<std::size_t>(j));
        for (std::size_t c = 0; c < out.size(); ++c)
            out[c] += src[c];
    }
    for (double& v : out)
        v *= scale;
}

inline NeighborTable make_table(std::size_t num_reference, std::size_t num_queries, std::size_t k)
{
    if (k == 0)
        throw ConfigError("knn_search: k must be at least 1");
    if (num_reference < k)
        throw DataError("knn_search: fewer reference points than k");
    NeighborTable table;
    table.k = k;
    table.indices.resize(num_queries * k);
    table.distances.resize(num_queries * k);
    return table;
}

inline void knn_query(std::span<const Vec3> reference, const Vec3& query, NeighborTable& table,
                      std::size_t q, std::vector<std::int32_t>& order, std::vector<double>& d2)
{
    for (std::size_t r = 0; r < reference.size(); ++r) {
        const Vec3 d = reference[r] - query;
        d2[r] = dot(d, d);
    }
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = table.k;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::int32_t a, std::int32_t b) {
                          return d2[static_cast<std::size_t>(a)] < d2[static_cast<std::size_t>(b)] ||
                                 (d2[static_cast<std::size_t>(a)] == d2[static_cast<std::size_t>(b)] &&
                                  a < b);
                      });
    for (std::size_t j = 0; j < k; ++j) {
        table.indices[q * k + j] = order[j];
        table.distances[q * k + j] = std::sqrt(d2[static_cast<std::size_t>(order[j])]);
    }
}

} // namespace ws3d::kernels::detail
