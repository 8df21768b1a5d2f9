#pragma once

#include <array>
#include <cmath>

namespace ws3d {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a)
{
    const double n = norm(a);
    return n > 0.0 ? a * (1.0 / n) : a;
}

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }
    Vec3 operator*(const Vec3& v) const
    {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const
    {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k)
                    s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const
    {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = (*this)(j, i);
        return r;
    }
    friend bool operator==(const Mat3&, const Mat3&) = default;
};

/// Row-major 4x4 matrix; used for rigid world-to-camera transforms.
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() { return {{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}}; }
    static Mat4 rigid(const Mat3& rotation, const Vec3& translation)
    {
        Mat4 t = identity();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                t(i, j) = rotation(i, j);
        t(0, 3) = translation.x;
        t(1, 3) = translation.y;
        t(2, 3) = translation.z;
        return t;
    }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 4 + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 4 + c)]; }
    Mat3 rotation() const
    {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = (*this)(i, j);
        return r;
    }
    Vec3 translation() const { return {(*this)(0, 3), (*this)(1, 3), (*this)(2, 3)}; }
    Vec3 transform_point(const Vec3& p) const { return rotation() * p + translation(); }
    friend bool operator==(const Mat4&, const Mat4&) = default;
};

/// Rotation by `angle` radians about a unit axis (Rodrigues).
inline Mat3 axis_angle(const Vec3& axis, double angle)
{
    const Vec3 a = normalized(axis);
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    return {{t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y,
             t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x,
             t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c}};
}

} // namespace ws3d
