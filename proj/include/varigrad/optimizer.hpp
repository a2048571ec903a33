#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "varigrad/matrix.hpp"

namespace varigrad {

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Decay of the exponential moving average used for temporal averaging.
    double averaging_decay = 0.999;
};

/// A named parameter the optimizer may update in place.
struct ParamSlot {
    std::string name;
    Matrix* value = nullptr;
    /// log-alpha entries are projected onto (-inf, 0] after every step.
    bool log_alpha = false;
};

/// Adam ascent on a maximized objective with temporal (Polyak) averaging.
///
/// State is created on the first step from the slot shapes; later steps must pass the same
/// slots in the same order.
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    void step(std::span<const ParamSlot> params, std::span<const Matrix* const> grads);

    /// Bias-corrected exponential average of the iterates, one matrix per slot.
    std::vector<Matrix> averaged_params() const;

    std::size_t steps() const { return steps_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::size_t steps_ = 0;
    std::vector<Matrix> first_moment_;
    std::vector<Matrix> second_moment_;
    std::vector<Matrix> average_;
    double beta1_power_ = 1.0;
    double beta2_power_ = 1.0;
    double average_power_ = 1.0;
};

}  // namespace varigrad
