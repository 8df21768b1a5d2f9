#pragma once

// Independent brute-force implementations the library is checked against.
// They share no code with src/ beyond the basic value types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <ws3d/camera.hpp>
#include <ws3d/geometry.hpp>
#include <ws3d/matrix.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d::oracle {

/// Supervised InfoNCE by direct double loops over anchors and positives.
inline double contrastive(const std::vector<std::vector<std::vector<double>>>& groups, double t)
{
    std::vector<std::vector<double>> f;
    std::vector<int> tag;
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (const auto& v : groups[g]) {
            double n = 0.0;
            for (double x : v)
                n += x * x;
            n = std::sqrt(n);
            std::vector<double> u(v.size());
            for (std::size_t d = 0; d < v.size(); ++d)
                u[d] = v[d] / n;
            f.push_back(u);
            tag.push_back(static_cast<int>(g));
        }
    auto sim = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t d = 0; d < f[a].size(); ++d)
            s += f[a][d] * f[b][d];
        return std::exp(s / t);
    };
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < f.size(); ++j) {
            if (i == j || tag[i] != tag[j])
                continue;
            double neg = 0.0;
            for (std::size_t k = 0; k < f.size(); ++k)
                if (tag[k] != tag[i])
                    neg += sim(i, k);
            sum += -std::log(sim(i, j) / (sim(i, j) + neg));
            ++pairs;
        }
    return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

struct BruteMetrics {
    std::vector<double> iou, dsc;
    double miou = 0.0, dsc_mean = 0.0, accuracy = 0.0;
};

/// Per-class tallies straight from the label arrays.
inline BruteMetrics metrics(const std::vector<int>& truth, const std::vector<int>& pred, int classes)
{
    BruteMetrics m;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        correct += truth[i] == pred[i];
    m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            tp += truth[i] == c && pred[i] == c;
            fp += truth[i] != c && pred[i] == c;
            fn += truth[i] == c && pred[i] != c;
        }
        if (tp + fp + fn == 0) {
            m.iou.push_back(std::nan(""));
            m.dsc.push_back(std::nan(""));
            continue;
        }
        m.iou.push_back(tp / (tp + fp + fn));
        m.dsc.push_back(2 * tp / (2 * tp + fp + fn));
        m.miou += m.iou.back();
        m.dsc_mean += m.dsc.back();
        ++present;
    }
    if (present > 0) {
        m.miou /= present;
        m.dsc_mean /= present;
    }
    return m;
}

/// All-pairs k-NN with inverse-distance weights; exact hits take the plain
/// mean of the coinciding samples.
inline Matrix knn_interpolate(const Matrix& values, const std::vector<Vec3>& samples,
                              const std::vector<Vec3>& queries, std::size_t k)
{
    Matrix out(queries.size(), values.cols());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            const double dx = samples[s].x - queries[q].x, dy = samples[s].y - queries[q].y,
                         dz = samples[s].z - queries[q].z;
            d.emplace_back(std::sqrt(dx * dx + dy * dy + dz * dz), s);
        }
        std::sort(d.begin(), d.end());
        d.resize(std::min(k, d.size()));
        std::vector<double> w;
        const bool exact = d.front().first == 0.0;
        for (const auto& [dist, s] : d)
            w.push_back(exact ? (dist == 0.0 ? 1.0 : 0.0) : 1.0 / (dist + 1e-8));
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t c = 0; c < values.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d.size(); ++j)
                acc += w[j] * values(d[j].second, c);
            out(q, c) = acc / total;
        }
    }
    return out;
}

/// Per pixel, the minimum (depth, index) over every point whose splat disc
/// covers it.
struct BruteView {
    std::vector<double> depth;
    std::vector<std::int32_t> index;
};

inline BruteView zbuffer(const LabeledScan& scan, const Camera& cam, int radius)
{
    BruteView v;
    const std::size_t pixels = static_cast<std::size_t>(cam.height) * static_cast<std::size_t>(cam.width);
    v.depth.assign(pixels, std::numeric_limits<double>::infinity());
    v.index.assign(pixels, -1);
    const Mat3 r = cam.extrinsics.rotation();
    const Vec3 t = cam.extrinsics.translation();
    for (int h = 0; h < cam.height; ++h)
        for (int w = 0; w < cam.width; ++w) {
            const std::size_t p = static_cast<std::size_t>(h) * static_cast<std::size_t>(cam.width) +
                                  static_cast<std::size_t>(w);
            for (std::size_t i = 0; i < scan.size(); ++i) {
                const Vec3 c = r * scan.positions[i] + t;
                if (!(c.z > 0.0))
                    continue;
                const double u = (cam.fx() * c.x + cam.intrinsics(0, 1) * c.y) / c.z + cam.cx();
                const double vv = cam.fy() * c.y / c.z + cam.cy();
                const long hc = std::lround(vv), wc = std::lround(u);
                const long dh = h - hc, dw = w - wc;
                if (dh * dh + dw * dw > static_cast<long>(radius) * radius)
                    continue;
                if (c.z < v.depth[p] || (c.z == v.depth[p] && static_cast<std::int32_t>(i) < v.index[p])) {
                    v.depth[p] = c.z;
                    v.index[p] = static_cast<std::int32_t>(i);
                }
            }
        }
    return v;
}

/// Largest relative error |a - fd| / (|fd| + 1e-12) of central differences
/// over the given coordinates.
inline double fd_max_relative_error(std::vector<double> params, std::span<const double> analytic,
                                    std::span<const std::size_t> coords,
                                    const std::function<double(const std::vector<double>&)>& loss,
                                    double h = 1e-5)
{
    double worst = 0.0;
    for (std::size_t c : coords) {
        const double keep = params[c];
        params[c] = keep + h;
        const double up = loss(params);
        params[c] = keep - h;
        const double down = loss(params);
        params[c] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[c] - fd) / (std::abs(fd) + 1e-12));
    }
    return worst;
}

} // namespace ws3d::oracle
