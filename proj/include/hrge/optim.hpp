#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hrge/layers.hpp"

namespace hrge {

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

// Adam with bias correction and decoupled weight decay:
//   p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
class AdamState {
public:
    AdamState() = default;
    AdamState(const ParamList& params, AdamConfig cfg);

    // Applies one update using the gradients currently held in params. lr
    // overrides cfg.lr (the schedule decides it per epoch).
    void step(const ParamList& params, double lr);
    void step(const ParamList& params) { step(params, cfg_.lr); }

    std::uint64_t step_count() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
};

// Staircase decay: initial_lr * decay_factor ^ floor(epoch / decay_period).
struct LrSchedule {
    double initial_lr = 1e-5;
    double decay_factor = 0.5;
    std::size_t decay_period = 20;

    double at(std::size_t epoch) const;
};

double lr_at_epoch(const LrSchedule& s, std::size_t epoch);

} // namespace hrge
