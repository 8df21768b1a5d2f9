#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <ws3d/geometry.hpp>
#include <ws3d/matrix.hpp>

namespace ws3d {

/// Row = ground truth, column = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes = 0);

    void add(std::span<const int> truth, std::span<const int> predicted);
    std::uint64_t at(int truth, int predicted) const;
    int num_classes() const noexcept { return m_classes; }

    std::uint64_t true_positives(int c) const;
    std::uint64_t false_positives(int c) const;
    std::uint64_t false_negatives(int c) const;
    std::uint64_t total() const;
    std::uint64_t correct() const;

private:
    int m_classes = 0;
    std::vector<std::uint64_t> m_counts;
};

struct Metrics {
    std::vector<double> iou; // per class; NaN where the class is absent from truth and prediction
    std::vector<double> dsc;
    double miou = 0.0;
    double dsc_mean = 0.0;
    double accuracy = 0.0;
    std::map<std::string, double> bucket_iou;
};

/// Class-bucket names for per-category reporting; `buckets[c]` is the bucket
/// of class c.
struct ClassBuckets {
    std::vector<std::string> names;
    std::vector<int> bucket_of;

    /// Full arch of `num_teeth` teeth (molar, premolar, canine, incisor
    /// mirrored around the midline) plus gingiva for class 0.
    static ClassBuckets dental_arch(int num_teeth);
};

/// IoU_c = TP/(TP+FP+FN), DSC_c = 2TP/(2TP+FP+FN), Acc = correct/total.
/// Means run over classes present in the truth or the prediction.
Metrics compute_metrics(const ConfusionMatrix& cm, const ClassBuckets* buckets = nullptr);

/// Argmax per row, ties to the lower class.
std::vector<int> argmax_rows(const Matrix& logits);

/// Inverse-distance-weighted mean of the `k` nearest samples' rows, weights
/// 1/(d + 1e-8). A query coinciding with samples (d == 0) takes the mean of
/// those samples only.
Matrix knn_interpolate(const Matrix& sample_values, std::span<const Vec3> sample_positions,
                       std::span<const Vec3> full_positions, std::size_t k = 3);

} // namespace ws3d
