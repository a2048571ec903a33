#pragma once

#include <string_view>

#include "varigrad/layers.hpp"
#include "varigrad/model.hpp"
#include "varigrad/posterior_kl.hpp"

namespace varigrad {

// Inverses of the to_string overloads. Unknown names throw ConfigError listing the choices.
EstimatorMode parse_estimator_mode(std::string_view text);
NoiseKind parse_noise_kind(std::string_view text);
KlMode parse_kl_mode(std::string_view text);
Granularity parse_granularity(std::string_view text);
Activation parse_activation(std::string_view text);

}  // namespace varigrad
