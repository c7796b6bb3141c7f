#include "hrge/optim.hpp"

#include <cmath>

#include "hrge/errors.hpp"

namespace hrge {

AdamState::AdamState(const ParamList& params, AdamConfig cfg) : cfg_(cfg) {
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0 || cfg.eps <= 0.0) {
        throw ConfigError("adam: betas must lie in [0, 1) and eps must be positive");
    }
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
    }
}

void AdamState::step(const ParamList& params, double lr) {
    if (params.size() != m_.size()) {
        throw ConfigError("adam: state tracks " + std::to_string(m_.size()) + " tensors, got " +
                          std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].value.size() != m_[k].size() || params[k].grad.size() != m_[k].size()) {
            throw ConfigError("adam: shape mismatch for " + params[k].name);
        }
    }
    ++t_;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double decay = lr * cfg_.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].value;
        const auto g = params[k].grad;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= decay * p[i];
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

double LrSchedule::at(std::size_t epoch) const {
    if (decay_period == 0) return initial_lr;
    const auto k = static_cast<double>(epoch / decay_period);
    return initial_lr * std::pow(decay_factor, k);
}

double lr_at_epoch(const LrSchedule& s, std::size_t epoch) { return s.at(epoch); }

} // namespace hrge
