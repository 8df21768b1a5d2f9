#pragma once

// Data-parallel inner loops of the network and the neighbourhood queries.
//
// Every kernel exists twice: `serial::` is the plain reference used by the
// tests, `omp::` is the OpenMP version used by the pipeline. Both produce
// bit-identical results: each output element is reduced by exactly one
// thread in the same order as the serial loop.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <ws3d/geometry.hpp>
#include <ws3d/matrix.hpp>

namespace ws3d::kernels {

/// Row-major (out x in) weight block plus bias, viewed inside a flat
/// parameter vector.
struct LinearView {
    std::span<const double> weight;
    std::span<const double> bias;
    std::size_t in = 0;
    std::size_t out = 0;
};

struct LinearGradView {
    std::span<double> weight;
    std::span<double> bias;
};

/// k-nearest-neighbour table: `indices[q * k + j]` is the j-th closest
/// reference point to query q, ordered by (distance, index).
struct NeighborTable {
    std::size_t k = 0;
    std::vector<std::int32_t> indices;
    std::vector<double> distances;

    std::span<const std::int32_t> of(std::size_t q) const { return {indices.data() + q * k, k}; }
};

namespace serial {
// Y = X W^T + b
void linear_forward(const Matrix& x, const LinearView& layer, Matrix& y);
// dX = dY W
void linear_backward_input(const Matrix& dy, const LinearView& layer, Matrix& dx);
// dW += dY^T X, db += column sums of dY
void linear_backward_params(const Matrix& x, const Matrix& dy, const LinearGradView& grad);
// out[i] = mean of h over the neighbours of i
void neighbor_mean(const Matrix& h, const NeighborTable& nbrs, Matrix& out);
// dh += d_out[i] / k scattered to every neighbour of i
void neighbor_mean_backward(const Matrix& d_out, const NeighborTable& nbrs, Matrix& dh);
NeighborTable knn_search(std::span<const Vec3> reference, std::span<const Vec3> queries,
                         std::size_t k);
} // namespace serial

namespace omp {
// Y = X W^T + b
void linear_forward(const Matrix& x, const LinearView& layer, Matrix& y);
// dX = dY W
void linear_backward_input(const Matrix& dy, const LinearView& layer, Matrix& dx);
// dW += dY^T X, db += column sums of dY
void linear_backward_params(const Matrix& x, const Matrix& dy, const LinearGradView& grad);
// out[i] = mean of h over the neighbours of i
void neighbor_mean(const Matrix& h, const NeighborTable& nbrs, Matrix& out);
// dh += d_out[i] / k scattered to every neighbour of i
void neighbor_mean_backward(const Matrix& d_out, const NeighborTable& nbrs, Matrix& dh);
NeighborTable knn_search(std::span<const Vec3> reference, std::span<const Vec3> queries,
                         std::size_t k);
} // namespace omp

} // namespace ws3d::kernels
