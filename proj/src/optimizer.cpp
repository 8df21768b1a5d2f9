#include <ws3d/optimizer.hpp>

#include <cmath>

#include <ws3d/errors.hpp>

namespace ws3d {

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& cfg)
{
    if (params.size() != grads.size())
        throw DataError("adamw_step: parameter and gradient sizes differ");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw DataError("adamw_step: optimizer state does not match the parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        const double p = params[i];
        params[i] = p - cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon)) -
                    cfg.learning_rate * cfg.weight_decay * p;
    }
}

} // namespace ws3d
