#include "varigrad/names.hpp"

#include <array>
#include <string>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

template <typename Enum, std::size_t N>
Enum parse_choice(std::string_view what, std::string_view text,
                  const std::array<Enum, N>& choices) {
    std::string listing;
    for (Enum choice : choices) {
        if (to_string(choice) == text) return choice;
        if (!listing.empty()) listing += '|';
        listing += to_string(choice);
    }
    throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) +
                      "', expected one of {" + listing + "}");
}

}  // namespace

EstimatorMode parse_estimator_mode(std::string_view text) {
    return parse_choice("mode", text,
                        std::array{EstimatorMode::LocalReparam, EstimatorMode::WeightPerDatapoint,
                                   EstimatorMode::WeightPerMinibatch, EstimatorMode::NoNoise});
}

NoiseKind parse_noise_kind(std::string_view text) {
    return parse_choice("noise", text,
                        std::array{NoiseKind::TypeA, NoiseKind::TypeB, NoiseKind::BinaryDropout,
                                   NoiseKind::GaussianDropoutFixed, NoiseKind::None});
}

KlMode parse_kl_mode(std::string_view text) {
    return parse_choice("kl mode", text,
                        std::array{KlMode::Polynomial, KlMode::LowerBound, KlMode::Quadrature});
}

Granularity parse_granularity(std::string_view text) {
    return parse_choice("granularity", text,
                        std::array{Granularity::PerLayer, Granularity::PerInputNeuron,
                                   Granularity::PerWeight});
}

Activation parse_activation(std::string_view text) {
    return parse_choice("activation", text, std::array{Activation::ReLU, Activation::Softplus});
}

}  // namespace varigrad
