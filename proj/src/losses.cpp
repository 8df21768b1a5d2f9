#include <ws3d/losses.hpp>

#include <algorithm>
#include <cmath>

#include <ws3d/errors.hpp>
#include <ws3d/kernels.hpp>

namespace ws3d {

void LossConfig::validate() const
{
    if (!(tau > 0.0 && tau < 1.0))
        throw ConfigError("tau must lie in (0, 1)");
    if (!(temperature > 0.0))
        throw ConfigError("temperature must be > 0");
    if (warmup_epochs < 0)
        throw ConfigError("warmup_epochs must be >= 0");
    if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0))
        throw ConfigError("loss weights must be >= 0");
}

double cross_entropy(std::span<const double> logits, int target, std::span<double> grad)
{
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits)
        z += std::exp(v - m);
    const double log_z = m + std::log(z);
    if (!grad.empty()) {
        for (std::size_t c = 0; c < logits.size(); ++c)
            grad[c] = std::exp(logits[c] - log_z);
        grad[static_cast<std::size_t>(target)] -= 1.0;
    }
    return log_z - logits[static_cast<std::size_t>(target)];
}

LossValue coseg_loss(const Prediction& pred, std::span<const int> labels,
                     const SparseLabelMask& sparse, CosegNorm norm)
{
    if (sparse.labeled_indices.empty())
        throw SupervisionError("coseg_loss: empty labelled set");
    const std::size_t n = pred.size();
    const std::size_t classes = pred.logits.cols();
    if (labels.size() != n)
        throw DataError("coseg_loss: label count does not match prediction");
    const double z = norm == CosegNorm::LabeledCount ? static_cast<double>(sparse.labeled_indices.size())
                                                     : static_cast<double>(n);
    LossValue out;
    out.grad.logits = Matrix(n, classes);
    out.grad.confidence.assign(n, 0.0);
    std::vector<double> ce_grad(classes);
    for (std::size_t i : sparse.labeled_indices) {
        if (i >= n)
            throw DataError("coseg_loss: labelled index out of range");
        const int target = labels[i];
        if (target < 0 || static_cast<std::size_t>(target) >= classes)
            throw DataError("coseg_loss: label out of range");
        const double ce = cross_entropy(pred.logits.row(i), target, ce_grad);
        const double c = pred.confidence[i];
        out.value += c * ce + (1.0 - c) * (1.0 - c);
        auto g = out.grad.logits.row(i);
        for (std::size_t k = 0; k < classes; ++k)
            g[k] += c * ce_grad[k] / z;
        out.grad.confidence[i] += (ce - 2.0 * (1.0 - c)) / z;
    }
    out.value /= z;
    return out;
}

ContrastiveResult contrastive_fg(std::span<const Matrix> groups, double temperature)
{
    if (!(temperature > 0.0))
        throw ConfigError("contrastive_fg: temperature must be > 0");
    ContrastiveResult out;
    out.grads.reserve(groups.size());
    std::size_t total = 0, nonempty = 0, dim = 0;
    for (const Matrix& g : groups) {
        out.grads.emplace_back(g.rows(), g.cols());
        total += g.rows();
        if (g.rows() > 0) {
            ++nonempty;
            if (dim != 0 && g.cols() != dim)
                throw DataError("contrastive_fg: feature widths differ between subgroups");
            dim = g.cols();
        }
    }
    for (const Matrix& g : groups)
        if (g.rows() > 1)
            out.pairs += g.rows() * (g.rows() - 1);
    if (nonempty < 2 || out.pairs == 0) {
        out.degenerate = true;
        return out;
    }

    // Flatten to unit features; subgroups occupy contiguous row ranges.
    Matrix unit(total, dim);
    std::vector<double> lengths(total);
    std::vector<std::size_t> group_of(total), row_of(total), begin(groups.size()), end(groups.size());
    {
        std::size_t at = 0;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            begin[gi] = at;
            for (std::size_t r = 0; r < groups[gi].rows(); ++r, ++at) {
                const auto src = groups[gi].row(r);
                double len = 0.0;
                for (double v : src)
                    len += v * v;
                len = std::max(std::sqrt(len), 1e-12);
                lengths[at] = len;
                for (std::size_t d = 0; d < dim; ++d)
                    unit(at, d) = src[d] / len;
                group_of[at] = gi;
                row_of[at] = r;
            }
            end[gi] = at;
        }
    }

    // e_ab = exp((s_ab - 1) / t) with s = U U^T, in column panels so the
    // rows being written stay in cache. The shift cancels inside every term
    // and keeps the exponent non-positive.
    const double inv_t = 1.0 / temperature;
    Matrix e(total, total);
    {
        constexpr std::size_t kPanel = 128;
        const std::vector<double> no_bias(kPanel, 0.0);
        Matrix panel;
        for (std::size_t p0 = 0; p0 < total; p0 += kPanel) {
            const std::size_t pw = std::min(kPanel, total - p0);
            const kernels::LinearView rows{std::span<const double>(unit.values()).subspan(p0 * dim, pw * dim),
                                           std::span<const double>(no_bias).first(pw), dim, pw};
            kernels::serial::linear_forward(unit, rows, panel);
            for (std::size_t a = 0; a < total; ++a) {
                const double* src = panel.row(a).data();
                double* dst = e.row(a).data() + p0;
                for (std::size_t c = 0; c < pw; ++c)
                    dst[c] = std::exp((src[c] - 1.0) * inv_t);
            }
        }
    }

    // Anchor a contributes dL/ds_ab = scale_a e_ab for b in another
    // subgroup and coef/t (e_ab / (e_ab + neg_a) - 1) for b in its own.
    const double coef = 1.0 / static_cast<double>(out.pairs);
    std::vector<double> negatives(total, 0.0), scale(total, 0.0);
    double loss = 0.0;
    for (std::size_t a = 0; a < total; ++a) {
        const std::size_t g0 = begin[group_of[a]], g1 = end[group_of[a]];
        if (g1 - g0 < 2)
            continue; // a singleton anchor has no positive pair
        const auto ea = e.row(a);
        double neg = 0.0;
        for (std::size_t b = 0; b < g0; ++b)
            neg += ea[b];
        for (std::size_t b = g1; b < total; ++b)
            neg += ea[b];
        double inv_sum = 0.0;
        for (std::size_t j = g0; j < g1; ++j) {
            if (j == a)
                continue;
            loss += std::log1p(neg / ea[j]);
            inv_sum += 1.0 / (ea[j] + neg);
        }
        negatives[a] = neg;
        scale[a] = coef * inv_t * inv_sum;
    }
    out.value = coef * loss;

    // s_ab = u_a . u_b, so dL/dU = M U with M = W + W^T; e is symmetric, so
    // every row of M only needs the same row of e and is written over it.
    for (std::size_t a = 0; a < total; ++a) {
        const std::size_t g0 = begin[group_of[a]], g1 = end[group_of[a]];
        auto row = e.row(a);
        const double sa = scale[a];
        for (std::size_t b = 0; b < g0; ++b)
            row[b] *= sa + scale[b];
        for (std::size_t b = g1; b < total; ++b)
            row[b] *= sa + scale[b];
        for (std::size_t j = g0; j < g1; ++j) {
            if (j == a) {
                row[j] = 0.0;
                continue;
            }
            const double eaj = row[j];
            row[j] = coef * inv_t * ((eaj / (eaj + negatives[a]) - 1.0) + (eaj / (eaj + negatives[j]) - 1.0));
        }
    }
    Matrix du;
    kernels::serial::linear_backward_input(e, {unit.values(), {}, dim, total}, du);
    for (std::size_t a = 0; a < total; ++a) {
        const auto ua = unit.row(a), da = du.row(a);
        double proj = 0.0;
        for (std::size_t d = 0; d < dim; ++d)
            proj += da[d] * ua[d];
        auto g = out.grads[group_of[a]].row(row_of[a]);
        for (std::size_t d = 0; d < dim; ++d)
            g[d] = (da[d] - proj * ua[d]) / lengths[a];
    }
    return out;
}

LossValue background_loss(const Prediction& pred, std::span<const std::size_t> bg_indices)
{
    LossValue out;
    const std::size_t n = pred.size(), classes = pred.logits.cols();
    out.grad.logits = Matrix(n, classes);
    if (bg_indices.empty()) {
        out.degenerate = true;
        return out;
    }
    const double inv = 1.0 / static_cast<double>(bg_indices.size());
    std::vector<double> ce_grad(classes);
    for (std::size_t i : bg_indices) {
        if (i >= n)
            throw DataError("background_loss: index out of range");
        out.value += cross_entropy(pred.logits.row(i), 0, ce_grad);
        auto g = out.grad.logits.row(i);
        for (std::size_t c = 0; c < classes; ++c)
            g[c] += ce_grad[c] * inv;
    }
    out.value *= inv;
    return out;
}

bool mrl_active(int epoch, const LossConfig& cfg)
{
    return epoch > cfg.warmup_epochs && (cfg.lambda2 > 0.0 || cfg.lambda3 > 0.0);
}

LossReport total_loss(const LossParts& parts, int epoch, const LossConfig& cfg)
{
    LossReport r;
    r.coseg = parts.coseg;
    r.fg = parts.fg;
    r.bg = parts.bg;
    const double gate = epoch > cfg.warmup_epochs ? 1.0 : 0.0;
    r.coseg_weight = cfg.lambda1;
    r.fg_weight = cfg.lambda2 * gate;
    r.bg_weight = cfg.lambda3 * gate;
    r.fg_active = r.fg_weight > 0.0;
    r.bg_active = r.bg_weight > 0.0;
    r.total = cfg.lambda1 * parts.coseg + (cfg.lambda2 * parts.fg + cfg.lambda3 * parts.bg) * gate;
    return r;
}

} // namespace ws3d
