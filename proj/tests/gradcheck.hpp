#pragma once

// Finite-difference checks of every training loss through the network.

#include <random>
#include <string>

#include <ws3d/losses.hpp>
#include <ws3d/segnet.hpp>

#include "oracles.hpp"
#include "support.hpp"

namespace ws3d::test {

enum class LossKind { Coseg, Fg, Bg, Total };

inline const char* loss_name(LossKind k)
{
    switch (k) {
    case LossKind::Coseg: return "coseg";
    case LossKind::Fg: return "fg";
    case LossKind::Bg: return "bg";
    default: return "total";
    }
}

/// Fixed targets for one scan: sparse labels, a few points of every tooth as
/// foreground groups, and the gingiva as background.
struct GradProblem {
    LabeledScan scan;
    ScanInput input;
    SparseLabelMask sparse;
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::size_t> background;
    LossConfig cfg;
};

inline GradProblem make_grad_problem(std::uint64_t seed)
{
    GradProblem p;
    p.scan = small_scan(seed);
    p.input = prepare_input(p.scan, 8);
    p.sparse = sample_sparse_labels(p.scan, 2, seed);
    p.groups.resize(static_cast<std::size_t>(p.scan.num_teeth()));
    for (std::size_t i = 0; i < p.scan.size(); ++i) {
        const int c = p.scan.class_labels[i];
        if (c == 0)
            p.background.push_back(i);
        else if (p.groups[static_cast<std::size_t>(c - 1)].size() < 3)
            p.groups[static_cast<std::size_t>(c - 1)].push_back(i);
    }
    return p;
}

inline NetworkDims grad_dims(int classes)
{
    NetworkDims d;
    d.classes = classes;
    d.hidden = 16;
    d.embed = 8;
    d.conf_hidden = 8;
    d.knn = 8;
    return d;
}

/// Loss value and, when `grad` is given, its prediction gradient.
inline double eval_loss(const GradProblem& p, const Prediction& pred, LossKind kind, PredictionGrad* grad)
{
    LossValue coseg = coseg_loss(pred, p.scan.class_labels, p.sparse);
    LossValue bg = background_loss(pred, p.background);
    std::vector<Matrix> feats;
    for (const auto& g : p.groups) {
        Matrix m(g.size(), pred.embedding.cols());
        for (std::size_t r = 0; r < g.size(); ++r)
            std::copy(pred.embedding.row(g[r]).begin(), pred.embedding.row(g[r]).end(), m.row(r).begin());
        feats.push_back(std::move(m));
    }
    const ContrastiveResult fg = contrastive_fg(feats, p.cfg.temperature);
    PredictionGrad fg_grad = PredictionGrad::zeros_like(pred);
    for (std::size_t g = 0; g < p.groups.size(); ++g)
        for (std::size_t r = 0; r < p.groups[g].size(); ++r)
            for (std::size_t d = 0; d < pred.embedding.cols(); ++d)
                fg_grad.embedding(p.groups[g][r], d) += fg.grads[g](r, d);

    const LossReport total = total_loss({coseg.value, fg.value, bg.value}, p.cfg.warmup_epochs + 1, p.cfg);
    switch (kind) {
    case LossKind::Coseg:
        if (grad)
            *grad = std::move(coseg.grad);
        return coseg.value;
    case LossKind::Fg:
        if (grad)
            *grad = std::move(fg_grad);
        return fg.value;
    case LossKind::Bg:
        if (grad)
            *grad = std::move(bg.grad);
        return bg.value;
    default:
        if (grad) {
            *grad = std::move(coseg.grad.scale(total.coseg_weight));
            *grad += fg_grad.scale(total.fg_weight);
            *grad += bg.grad.scale(total.bg_weight);
        }
        return total.total;
    }
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
};

/// Central differences (h = 1e-5) against backward() on `count` random
/// parameter coordinates.
inline GradCheckResult check_gradients(std::uint64_t seed, LossKind kind, std::size_t count)
{
    const GradProblem p = make_grad_problem(seed);
    NetworkParams params = init_params(grad_dims(p.scan.num_classes), seed * 7 + 1);
    // Non-zero biases so no unit starts exactly at a ReLU kink.
    std::mt19937_64 rng(seed + 99);
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (const LayerShape& l : params.layers())
        for (std::size_t o = 0; o < l.out; ++o)
            params.values()[l.bias_offset + o] = small(rng);

    ForwardTape tape;
    const Prediction pred = forward(p.input, params, &tape);
    PredictionGrad g;
    eval_loss(p, pred, kind, &g);
    const std::vector<double> analytic = backward(tape, params, g);

    std::vector<std::size_t> coords(count);
    std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
    for (auto& c : coords)
        c = pick(rng);
    NetworkParams probe = params;
    auto loss = [&](const std::vector<double>& values) {
        probe.values() = values;
        return eval_loss(p, forward(p.input, probe), kind, nullptr);
    };
    return {oracle::fd_max_relative_error(params.values(), analytic, coords, loss), coords.size()};
}

} // namespace ws3d::test
