#pragma once

#include <optional>
#include <string_view>

#include "varigrad/matrix.hpp"

namespace varigrad {

/// How many distinct noise parameters a layer carries.
enum class Granularity { PerLayer, PerInputNeuron, PerWeight };

/// Which weight posterior the noise parameters describe.
///   IndependentWeights: q(w_ij) = N(theta_ij, alpha_ij * theta_ij^2), one KL unit per weight.
///   InputScales:        w_i = s_i * theta_i with q(s_i) = N(1, alpha_i), one KL unit per input.
enum class PosteriorFamily { IndependentWeights, InputScales };

enum class KlMode { Polynomial, LowerBound, Quadrature };

/// Cubic coefficients of the -KL approximation for the log-uniform prior.
inline constexpr double kKlC1 = 1.16145124;
inline constexpr double kKlC2 = -1.50204118;
inline constexpr double kKlC3 = 0.58629921;

/// Mean parameters theta (K×L) and log-space noise parameters.
///
/// log_alpha is 1×1 (PerLayer), K×1 (PerInputNeuron) or K×L (PerWeight). The alpha <= 1
/// constraint is enforced by the optimizer; here it is only checked.
struct DropoutPosterior {
    Matrix theta;
    Matrix log_alpha;
    Granularity granularity = Granularity::PerLayer;
    PosteriorFamily family = PosteriorFamily::IndependentWeights;
};

/// Shape of log_alpha for a K×L layer; throws ConfigError for PerWeight input scales.
std::pair<std::size_t, std::size_t> log_alpha_shape(Granularity granularity,
                                                    PosteriorFamily family, std::size_t k,
                                                    std::size_t l);
void validate_posterior(const DropoutPosterior& posterior);

/// alpha broadcast to one value per input row (K×1). Requires granularity != PerWeight.
Matrix alpha_per_input(const DropoutPosterior& posterior);
/// alpha broadcast to the full K×L weight grid.
Matrix alpha_per_weight(const DropoutPosterior& posterior);

/// E[log|eps|] for eps ~ N(1, alpha), by graded Gauss–Legendre panels on
/// [1 - 12 sqrt(alpha), 1 + 12 sqrt(alpha)] with the log singularity at 0 isolated.
/// `resolution` scales the number of panels; the default is accurate to ~1e-12.
double expect_log_abs_eps(double alpha, int resolution = 4);

/// Negative KL of a single noise unit, normalized so the exact value is 0 at alpha = 1.
/// All three modes share that additive constant.
double neg_kl_per_unit(double log_alpha, KlMode mode);
/// d/d(log alpha) of neg_kl_per_unit; throws ConfigError for Quadrature.
double neg_kl_per_unit_grad(double log_alpha, KlMode mode);

struct NegKl {
    double value = 0.0;
    /// Same shape as log_alpha; absent for Quadrature mode.
    std::optional<Matrix> grad_log_alpha;
};

/// kl_scale * sum of per-unit -KL over every noise unit of the posterior. Reads only log_alpha.
NegKl neg_kl_total(const DropoutPosterior& posterior, KlMode mode, double kl_scale);

std::string_view to_string(KlMode mode);
std::string_view to_string(Granularity granularity);

}  // namespace varigrad
