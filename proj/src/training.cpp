#include "varigrad/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <ostream>

#include "varigrad/errors.hpp"
#include "varigrad/optimizer.hpp"

namespace varigrad {

namespace {

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

Mlp averaged_model(const Mlp& model, const Adam& adam, bool include_log_alpha) {
    Mlp copy = model;
    const auto averaged = adam.averaged_params();
    copy.assign_parameters(averaged, include_log_alpha);
    return copy;
}

}  // namespace

DataSplits load_splits(const RunConfig& config) {
    DataSplits splits;
    Dataset full;
    std::size_t default_validation = 0;
    if (config.dataset == "mnist") {
        std::filesystem::path dir = config.data_dir;
        if (dir.empty()) {
            const char* env = std::getenv("VARIGRAD_DATA_DIR");
            if (env == nullptr || *env == '\0') {
                throw ConfigError("config field 'data_dir': not set and VARIGRAD_DATA_DIR is empty");
            }
            dir = env;
        }
        full = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
        splits.test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
        default_validation = 10000;
    } else {
        full = synthetic_gaussian_classes(config.synthetic_n_per_class, config.synthetic_d,
                                          config.synthetic_c, config.synthetic_separation,
                                          config.synthetic_seed);
        if (config.synthetic_test_per_class > 0) {
            splits.test = synthetic_gaussian_classes(
                config.synthetic_test_per_class, config.synthetic_d, config.synthetic_c,
                config.synthetic_separation, config.synthetic_seed + 1);
        }
        default_validation = full.size() / 6;
    }
    const std::size_t validation = config.validation_size.value_or(default_validation);
    if (validation >= full.size()) {
        throw ConfigError("config field 'validation_size': " + std::to_string(validation) +
                          " leaves no training rows out of " + std::to_string(full.size()));
    }
    const std::size_t train_rows = full.size() - validation;
    splits.validation = slice(full, train_rows, full.size());
    const std::size_t kept =
        config.train_subset == 0 ? train_rows : std::min(config.train_subset, train_rows);
    splits.train = slice(full, 0, kept);
    return splits;
}

std::vector<std::size_t> noisy_layer_indices(const Mlp& model) {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < model.layers().size(); ++l)
        if (model.layers()[l].noise().kind != NoiseKind::None) out.push_back(l);
    return out;
}

TrainResult train_model(const RunConfig& config, const DataSplits& data, std::ostream* log) {
    validate(config);
    const Dataset& train = data.train;
    RngStream init_rng(config.seed, 1);
    Mlp model = Mlp::build(mlp_config(config, train.dim(), train.classes), init_rng);
    const bool adaptive = config.adaptive_alpha;
    const auto slots = model.parameter_slots(adaptive);
    Adam adam(config.adam);
    MinibatchSampler sampler(train.size(), std::min(config.batch_size, train.size()),
                             config.with_replacement, RngStream(config.seed, 2));
    RngStream noise(config.seed, 3);
    const ElboOptions options = elbo_options(config, train.size());
    const PredictionMode predict_mode = prediction_mode(config);
    const auto noisy = noisy_layer_indices(model);

    TrainResult result{model, {}, 0, std::nullopt};
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double elbo_sum = 0.0;
        const std::size_t steps = sampler.batches_per_epoch();
        for (std::size_t step = 0; step < steps; ++step) {
            const Batch batch = sampler.next_batch(train);
            const ElboResult r = elbo_minibatch(model, batch.X, batch.y, options, noise);
            const std::string where =
                "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
            if (!std::isfinite(r.report.elbo)) throw NumericError(where + ": non-finite ELBO");
            try {
                adam.step(slots, gradient_slots(model, r.gradients, adaptive));
            } catch (const OptimizerError& e) {
                throw NumericError(where + ": " + e.what());
            }
            elbo_sum += r.report.elbo;
        }

        Mlp evaluated = averaged_model(model, adam, adaptive);
        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.train_elbo = elbo_sum / static_cast<double>(steps);
        metrics.train_error = classification_error(evaluated, train.X, train.y, predict_mode);
        metrics.val_error =
            data.validation.size() == 0
                ? std::numeric_limits<double>::quiet_NaN()
                : classification_error(evaluated, data.validation.X, data.validation.y,
                                       predict_mode);
        for (std::size_t l : noisy) metrics.mean_alpha.push_back(evaluated.layers()[l].mean_alpha());
        if (log != nullptr) {
            *log << "epoch " << epoch << " elbo " << metrics.train_elbo << " train_error "
                 << metrics.train_error << " val_error " << metrics.val_error << '\n';
        }
        result.history.push_back(metrics);

        const bool improved = std::isnan(metrics.val_error) || metrics.val_error < best_val;
        if (improved) {
            if (!std::isnan(metrics.val_error)) best_val = metrics.val_error;
            result.best_epoch = epoch;
            result.model = std::move(evaluated);
        } else if (config.patience > 0 && epoch - result.best_epoch >= config.patience) {
            if (log != nullptr) *log << "early stop after epoch " << epoch << '\n';
            break;
        }
    }
    if (data.test.size() > 0) {
        result.test_error = classification_error(result.model, data.test.X, data.test.y,
                                                 predict_mode);
    }
    return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& history,
                       const std::vector<std::size_t>& noisy_layers) {
    out << "epoch,train_elbo,train_error,val_error";
    for (std::size_t l : noisy_layers) out << ",mean_alpha_l" << l;
    out << '\n';
    for (const auto& m : history) {
        out << m.epoch << ',' << format_double(m.train_elbo) << ','
            << format_double(m.train_error) << ',' << format_double(m.val_error);
        for (double a : m.mean_alpha) out << ',' << format_double(a);
        out << '\n';
    }
}

}  // namespace varigrad
