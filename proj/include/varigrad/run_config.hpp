#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "varigrad/layers.hpp"
#include "varigrad/model.hpp"
#include "varigrad/optimizer.hpp"
#include "varigrad/posterior_kl.hpp"

namespace varigrad {

/// Every setting of a command-line run. Parsed from a flat `key = value` file and/or
/// `--key value` flags; the serialized form written next to outputs parses back to the same
/// configuration.
struct RunConfig {
    // Data.
    std::string dataset = "synthetic";
    std::string data_dir;
    std::size_t train_subset = 0;               ///< 0 keeps every training row
    std::optional<std::size_t> validation_size;  ///< empty means automatic
    std::size_t synthetic_n_per_class = 600;
    std::size_t synthetic_test_per_class = 200;
    std::size_t synthetic_d = 50;
    std::size_t synthetic_c = 10;
    double synthetic_separation = 3.0;
    std::uint64_t synthetic_seed = 1234;

    // Model and noise.
    std::vector<std::size_t> hidden{128, 128, 128};
    Activation activation = Activation::ReLU;
    NoiseKind noise = NoiseKind::TypeB;
    std::optional<NoiseKind> input_noise;  ///< empty means the same as `noise`
    double input_dropout_p = 0.2;
    double hidden_dropout_p = 0.5;
    Granularity granularity = Granularity::PerLayer;
    bool adaptive_alpha = true;

    // Training.
    EstimatorMode mode = EstimatorMode::LocalReparam;
    KlMode kl = KlMode::Polynomial;
    double kl_scale = 1.0;
    AdamConfig adam;
    std::size_t epochs = 10;
    std::size_t batch_size = 100;
    std::uint64_t seed = 1;
    std::string out = "varigrad-out";
    std::size_t patience = 0;  ///< 0 disables early stopping
    bool with_replacement = true;
    std::string prediction = "mean";
    std::size_t mc_draws = 10;

    // Variance.
    std::string checkpoint;
    bool fresh_train = false;
    std::size_t var_repetitions = 200;
    std::size_t var_batch_size = 100;
    std::string var_layers = "first,last";
    std::vector<EstimatorMode> var_modes{EstimatorMode::LocalReparam,
                                         EstimatorMode::WeightPerDatapoint,
                                         EstimatorMode::WeightPerMinibatch, EstimatorMode::NoNoise};

    // Bench.
    std::vector<std::size_t> bench_inputs{64, 256, 512};
    std::size_t bench_outputs = 512;
    std::size_t bench_batch_size = 256;
    std::size_t bench_trials = 5;

    // Gradcheck.
    double fd_step = 1e-5;
    std::size_t fd_batch = 8;

    // KL table.
    std::size_t kl_grid_points = 100;
    double kl_alpha_min = 1.0 / 19.0;
    std::vector<double> kl_alphas;  ///< explicit grid; overrides the log-spaced one
};

/// All configuration keys in serialization order.
std::vector<std::string_view> config_keys();

/// Sets one key from text. Throws ConfigError naming the field on unknown keys or bad values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies a `key = value` file (blank lines and `#` comments ignored).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_config_text(RunConfig& config, std::string_view text, std::string_view origin);

/// Cross-field checks; throws ConfigError naming the offending field.
void validate(const RunConfig& config);

std::string serialize(const RunConfig& config);

/// Noise rate implied by a dropout probability p: p itself for binary dropout, p / (1 - p)
/// for the Gaussian kinds.
double noise_rate_for(NoiseKind kind, double p);
MlpConfig mlp_config(const RunConfig& config, std::size_t input_dim, std::size_t classes);
ElboOptions elbo_options(const RunConfig& config, std::size_t dataset_size);
PredictionMode prediction_mode(const RunConfig& config);

}  // namespace varigrad
