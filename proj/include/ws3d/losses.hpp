#pragma once

#include <span>
#include <vector>

#include <ws3d/matrix.hpp>
#include <ws3d/segnet.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d {

enum class CosegNorm {
    LabeledCount, // divide by |P_label|
    PointCount,   // divide by N
};

struct LossConfig {
    double tau = 0.6;
    double temperature = 0.1;
    int warmup_epochs = 10;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 0.01;
    CosegNorm coseg_norm = CosegNorm::LabeledCount;

    void validate() const;
};

/// A scalar loss with its gradient with respect to the prediction.
struct LossValue {
    double value = 0.0;
    PredictionGrad grad;
    bool degenerate = false; // no contrast / no targets: value and grad are zero
};

/// Softmax cross-entropy of one logit row against `target`, and its gradient
/// (softmax - onehot) written to `grad` when given.
double cross_entropy(std::span<const double> logits, int target, std::span<double> grad = {});

/// (1/Z) sum over labelled points of c_i * CE_i + (1 - c_i)^2.
LossValue coseg_loss(const Prediction& pred, std::span<const int> labels,
                     const SparseLabelMask& sparse, CosegNorm norm = CosegNorm::LabeledCount);

/// Supervised InfoNCE over subgroups of features. For every ordered pair
/// (i, j) of distinct features in one subgroup the term is
/// -log(e_ij / (e_ij + sum_k e_ik)), e = exp(cos_sim / t), k ranging over all
/// features of the other subgroups; the loss is the mean over such pairs.
struct ContrastiveResult {
    double value = 0.0;
    std::vector<Matrix> grads; // per subgroup, same shape as the input features
    std::size_t pairs = 0;
    bool degenerate = false;
};
ContrastiveResult contrastive_fg(std::span<const Matrix> groups, double temperature);

/// Mean softmax cross-entropy of the logits at `bg_indices` against class 0.
LossValue background_loss(const Prediction& pred, std::span<const std::size_t> bg_indices);

struct LossParts {
    double coseg = 0.0;
    double fg = 0.0;
    double bg = 0.0;
};

struct LossReport {
    double coseg = 0.0;
    double fg = 0.0;
    double bg = 0.0;
    double total = 0.0;
    bool fg_active = false;
    bool bg_active = false;

    /// Gradient weights for the three parts, indicator included.
    double coseg_weight = 0.0;
    double fg_weight = 0.0;
    double bg_weight = 0.0;
};

/// total = l1 * coseg + (l2 * fg + l3 * bg) * [epoch > T], 1-based epochs.
LossReport total_loss(const LossParts& parts, int epoch, const LossConfig& cfg);

/// Whether the mask-guided terms contribute at `epoch`.
bool mrl_active(int epoch, const LossConfig& cfg);

} // namespace ws3d
