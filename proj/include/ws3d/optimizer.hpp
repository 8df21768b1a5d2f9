#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ws3d {

struct AdamWConfig {
    double learning_rate = 5e-4;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One AdamW update with decoupled weight decay:
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& cfg);

} // namespace ws3d
