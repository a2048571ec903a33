#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "varigrad/data.hpp"
#include "varigrad/model.hpp"

namespace varigrad {

/// Which parameter block of which layer a variance measurement looks at.
struct ParamSelector {
    enum class Target { Theta, LogAlpha, Bias };
    std::size_t layer = 0;
    Target target = Target::Theta;
};

struct VarianceOptions {
    std::size_t batch_size = 100;
    std::size_t repetitions = 200;
    bool with_replacement = true;
    std::uint64_t seed = 0;
    KlMode kl_mode = KlMode::Polynomial;
    double kl_scale = 1.0;
    std::string epoch_tag;
};

struct VarianceEntry {
    std::size_t layer = 0;
    EstimatorMode mode = EstimatorMode::LocalReparam;
    std::size_t batch_size = 0;
    std::size_t repetitions = 0;
    bool with_replacement = true;
    std::uint64_t seed = 0;
    std::string epoch_tag;
    /// Mean over the selected parameters of the per-parameter variance across draws.
    double mean_variance = 0.0;
    /// Delete-a-group jackknife standard error of mean_variance; NaN with fewer than 4 draws.
    double std_error = 0.0;
};

using VarianceReport = std::vector<VarianceEntry>;

/// Variance of the minibatch ELBO gradient over R independent (minibatch, noise) draws.
///
/// Draw r uses the r-th batch of a sampler seeded by options.seed and the noise stream
/// (options.seed + 1, r), so every mode sees the same minibatches.
VarianceEntry gradient_variance(const Mlp& model, const Dataset& data, EstimatorMode mode,
                                const ParamSelector& selector, const VarianceOptions& options);

/// One entry per (layer, mode), layers outermost.
VarianceReport variance_table(const Mlp& model, const Dataset& data,
                              std::span<const std::size_t> layers,
                              std::span<const EstimatorMode> modes, const VarianceOptions& options);

/// gradient_variance repeated for each minibatch size.
VarianceReport variance_scaling_curve(const Mlp& model, const Dataset& data, EstimatorMode mode,
                                      std::span<const std::size_t> batch_sizes,
                                      const ParamSelector& selector,
                                      const VarianceOptions& options);

void write_variance_csv(std::ostream& out, const VarianceReport& report);

/// Scalar objective used by the finite-difference audit.
struct AuditObjective {
    enum class Kind {
        /// SGVB lower bound with noise frozen by a fixed seed.
        Elbo,
        /// 0.5 * sum of squared logits, with noise frozen the same way.
        SquaredErrorProbe,
    };
    Kind kind = Kind::Elbo;
    EstimatorMode mode = EstimatorMode::LocalReparam;
    KlMode kl_mode = KlMode::Polynomial;
    double kl_scale = 1.0;
    std::size_t dataset_size = 0;  ///< 0 means the batch size
    std::uint64_t noise_seed = 0;
};

struct AuditGroup {
    std::string name;
    std::size_t entries = 0;
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
};

struct AuditOptions {
    double step = 1e-5;
    /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
    double relative_floor = 1e-6;
};

/// Central differences against the analytic gradient for every parameter slot.
std::vector<AuditGroup> finite_difference_audit(const Mlp& model, const Matrix& inputs,
                                                std::span<const int> labels,
                                                const AuditObjective& objective,
                                                const AuditOptions& options = {});

double objective_value(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                       const AuditObjective& objective);

struct SpeedEntry {
    EstimatorMode mode = EstimatorMode::LocalReparam;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::size_t batch_size = 0;
    std::size_t trials = 0;
    double median_seconds = 0.0;
    double min_seconds = 0.0;
    double max_seconds = 0.0;
};

struct SpeedReport {
    std::vector<SpeedEntry> entries;
    std::string hardware_note;
};

struct SpeedOptions {
    std::size_t trials = 5;
    std::uint64_t seed = 0;
    double initial_alpha = 0.5;
};

/// Median wall-clock time of one forward plus backward pass through a single typeB layer.
SpeedReport estimator_speed_bench(std::size_t inputs, std::size_t outputs, std::size_t batch_size,
                                  std::span<const EstimatorMode> modes,
                                  const SpeedOptions& options = {});

void write_speed_json(std::ostream& out, const SpeedReport& report);

}  // namespace varigrad
