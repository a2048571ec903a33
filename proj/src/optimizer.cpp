#include "varigrad/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "varigrad/errors.hpp"

namespace varigrad {

Adam::Adam(AdamConfig config) : config_(config) {
    if (!(config_.step_size > 0.0)) throw ConfigError("adam: step size must be positive");
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
        !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
        throw ConfigError("adam: moment decays must lie in [0, 1)");
    }
    if (!(config_.epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
    if (!(config_.averaging_decay >= 0.0 && config_.averaging_decay < 1.0)) {
        throw ConfigError("adam: averaging decay must lie in [0, 1)");
    }
}

void Adam::step(std::span<const ParamSlot> params, std::span<const Matrix* const> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (steps_ == 0) {
        first_moment_.clear();
        second_moment_.clear();
        average_.clear();
        for (const auto& slot : params) {
            first_moment_.emplace_back(slot.value->rows(), slot.value->cols());
            second_moment_.emplace_back(slot.value->rows(), slot.value->cols());
            average_.emplace_back(slot.value->rows(), slot.value->cols());
        }
    } else if (params.size() != first_moment_.size()) {
        throw ConfigError("adam: parameter list changed between steps");
    }

    // Validate everything before mutating anything.
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Matrix& value = *params[p].value;
        const Matrix& grad = *grads[p];
        if (!value.same_shape(grad) || !value.same_shape(first_moment_[p])) {
            throw ShapeError("adam: gradient shape " + grad.shape_string() + " for parameter " +
                             params[p].name + " " + value.shape_string());
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            if (!std::isfinite(grad[i])) {
                throw OptimizerError("adam: non-finite gradient at " + params[p].name + "[" +
                                     std::to_string(i / grad.cols()) + "," +
                                     std::to_string(i % grad.cols()) + "]");
            }
        }
    }

    ++steps_;
    beta1_power_ *= config_.beta1;
    beta2_power_ *= config_.beta2;
    average_power_ *= config_.averaging_decay;
    const double m_correction = 1.0 / (1.0 - beta1_power_);
    const double v_correction = 1.0 / (1.0 - beta2_power_);
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double avg = config_.averaging_decay;

    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& value = *params[p].value;
        const Matrix& grad = *grads[p];
        Matrix& m = first_moment_[p];
        Matrix& v = second_moment_[p];
        Matrix& a = average_[p];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            const double m_hat = m[i] * m_correction;
            const double v_hat = v[i] * v_correction;
            value[i] += config_.step_size * m_hat / (std::sqrt(v_hat) + config_.epsilon);
            if (params[p].log_alpha) value[i] = std::min(value[i], 0.0);
            a[i] = avg * a[i] + (1.0 - avg) * value[i];
        }
    }
}

std::vector<Matrix> Adam::averaged_params() const {
    if (steps_ == 0) throw OptimizerError("adam: averaged parameters requested before any step");
    const double correction = 1.0 / (1.0 - average_power_);
    std::vector<Matrix> out;
    out.reserve(average_.size());
    for (const auto& a : average_) out.push_back(scale(a, correction));
    return out;
}

}  // namespace varigrad
