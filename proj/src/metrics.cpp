#include <ws3d/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <ws3d/errors.hpp>
#include <ws3d/kernels.hpp>

namespace ws3d {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : m_classes(num_classes), m_counts(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0)
{
}

void ConfusionMatrix::add(std::span<const int> truth, std::span<const int> predicted)
{
    if (truth.size() != predicted.size())
        throw DataError("confusion matrix: label arrays differ in length");
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= m_classes || predicted[i] < 0 || predicted[i] >= m_classes)
            throw DataError("confusion matrix: label out of range");
        ++m_counts[static_cast<std::size_t>(truth[i] * m_classes + predicted[i])];
    }
}

std::uint64_t ConfusionMatrix::at(int truth, int predicted) const
{
    return m_counts[static_cast<std::size_t>(truth * m_classes + predicted)];
}

std::uint64_t ConfusionMatrix::true_positives(int c) const { return at(c, c); }

std::uint64_t ConfusionMatrix::false_positives(int c) const
{
    std::uint64_t s = 0;
    for (int t = 0; t < m_classes; ++t)
        if (t != c)
            s += at(t, c);
    return s;
}

std::uint64_t ConfusionMatrix::false_negatives(int c) const
{
    std::uint64_t s = 0;
    for (int p = 0; p < m_classes; ++p)
        if (p != c)
            s += at(c, p);
    return s;
}

std::uint64_t ConfusionMatrix::total() const
{
    std::uint64_t s = 0;
    for (auto v : m_counts)
        s += v;
    return s;
}

std::uint64_t ConfusionMatrix::correct() const
{
    std::uint64_t s = 0;
    for (int c = 0; c < m_classes; ++c)
        s += at(c, c);
    return s;
}

ClassBuckets ClassBuckets::dental_arch(int num_teeth)
{
    ClassBuckets b;
    b.names = {"Incisor", "Canine", "Premolar", "Molar", "Gingiva"};
    b.bucket_of.assign(static_cast<std::size_t>(num_teeth) + 1, 0);
    b.bucket_of[0] = 4;
    const int half = (num_teeth + 1) / 2;
    for (int t = 1; t <= num_teeth; ++t) {
        // Position counted from the midline: 0, 1 incisors; 2 canine; 3, 4
        // premolars; the rest molars.
        const int from_mid = t <= half ? half - t : t - half - 1;
        int bucket = 3;
        if (from_mid <= 1)
            bucket = 0;
        else if (from_mid == 2)
            bucket = 1;
        else if (from_mid <= 4)
            bucket = 2;
        b.bucket_of[static_cast<std::size_t>(t)] = bucket;
    }
    return b;
}

Metrics compute_metrics(const ConfusionMatrix& cm, const ClassBuckets* buckets)
{
    const int k = cm.num_classes();
    Metrics m;
    m.iou.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
    m.dsc.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
    double iou_sum = 0.0, dsc_sum = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
        const auto tp = static_cast<double>(cm.true_positives(c));
        const auto fp = static_cast<double>(cm.false_positives(c));
        const auto fn = static_cast<double>(cm.false_negatives(c));
        if (tp + fp + fn == 0.0)
            continue;
        const double iou = tp / (tp + fp + fn);
        const double dsc = 2.0 * tp / (2.0 * tp + fp + fn);
        m.iou[static_cast<std::size_t>(c)] = iou;
        m.dsc[static_cast<std::size_t>(c)] = dsc;
        iou_sum += iou;
        dsc_sum += dsc;
        ++present;
    }
    m.miou = present ? iou_sum / present : 0.0;
    m.dsc_mean = present ? dsc_sum / present : 0.0;
    const auto total = cm.total();
    m.accuracy = total ? static_cast<double>(cm.correct()) / static_cast<double>(total) : 0.0;

    if (buckets) {
        std::vector<double> sum(buckets->names.size(), 0.0);
        std::vector<int> count(buckets->names.size(), 0);
        for (int c = 0; c < k && c < static_cast<int>(buckets->bucket_of.size()); ++c) {
            const double v = m.iou[static_cast<std::size_t>(c)];
            if (std::isnan(v))
                continue;
            const auto b = static_cast<std::size_t>(buckets->bucket_of[static_cast<std::size_t>(c)]);
            sum[b] += v;
            ++count[b];
        }
        for (std::size_t b = 0; b < buckets->names.size(); ++b)
            if (count[b] > 0)
                m.bucket_iou[buckets->names[b]] = sum[b] / count[b];
    }
    return m;
}

std::vector<int> argmax_rows(const Matrix& logits)
{
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best])
                best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

Matrix knn_interpolate(const Matrix& sample_values, std::span<const Vec3> sample_positions,
                       std::span<const Vec3> full_positions, std::size_t k)
{
    if (k == 0)
        throw ConfigError("knn_interpolate: k must be >= 1");
    if (sample_positions.empty())
        throw DataError("knn_interpolate: no samples");
    if (sample_values.rows() != sample_positions.size())
        throw DataError("knn_interpolate: sample values and positions differ in count");
    const std::size_t kk = std::min(k, sample_positions.size());
    const kernels::NeighborTable nbrs = kernels::omp::knn_search(sample_positions, full_positions, kk);
    const std::size_t c = sample_values.cols();
    Matrix out(full_positions.size(), c);
    for (std::size_t q = 0; q < full_positions.size(); ++q) {
        auto dst = out.row(q);
        const std::int32_t* idx = nbrs.indices.data() + q * kk;
        const double* dist = nbrs.distances.data() + q * kk;
        // Neighbours are sorted, so exact matches come first.
        std::size_t exact = 0;
        while (exact < kk && dist[exact] == 0.0)
            ++exact;
        double wsum = 0.0;
        const std::size_t used = exact > 0 ? exact : kk;
        for (std::size_t j = 0; j < used; ++j) {
            const double w = exact > 0 ? 1.0 : 1.0 / (dist[j] + 1e-8);
            const auto src = sample_values.row(static_cast<std::size_t>(idx[j]));
            for (std::size_t ch = 0; ch < c; ++ch)
                dst[ch] += w * src[ch];
            wsum += w;
        }
        for (double& v : dst)
            v /= wsum;
    }
    return out;
}

} // namespace ws3d
