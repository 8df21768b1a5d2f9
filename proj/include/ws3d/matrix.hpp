#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ws3d {

/// Dense row-major matrix of doubles. Rows are points, columns are channels.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill)
    {
    }

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_data.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_data[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_data.data() + r * m_cols, m_cols}; }

    double* data() noexcept { return m_data.data(); }
    const double* data() const noexcept { return m_data.data(); }
    std::vector<double>& values() noexcept { return m_data; }
    const std::vector<double>& values() const noexcept { return m_data; }

    void set_zero() { std::fill(m_data.begin(), m_data.end(), 0.0); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

} // namespace ws3d
