#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "varigrad/data.hpp"
#include "varigrad/model.hpp"
#include "varigrad/run_config.hpp"

namespace varigrad {

struct DataSplits {
    Dataset train;
    Dataset validation;
    Dataset test;  ///< may be empty
};

/// Builds the train/validation/test splits a configuration describes. MNIST files are read
/// from data_dir, or from $VARIGRAD_DATA_DIR when data_dir is empty.
DataSplits load_splits(const RunConfig& config);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_elbo = 0.0;  ///< mean minibatch ELBO estimate over the epoch
    double train_error = 0.0;
    double val_error = 0.0;   ///< NaN without a validation split
    std::vector<double> mean_alpha;  ///< one per layer that carries noise
};

struct TrainResult {
    /// Temporally averaged parameters of the best epoch (by validation error).
    Mlp model;
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    std::optional<double> test_error;
};

/// Adam ascent on the minibatch ELBO with early stopping on validation error.
/// Throws NumericError naming the epoch and step when the optimization blows up.
TrainResult train_model(const RunConfig& config, const DataSplits& data,
                        std::ostream* log = nullptr);

/// metrics.csv contents; `noisy_layers` gives the layer index of each mean_alpha column.
void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& history,
                       const std::vector<std::size_t>& noisy_layers);
std::vector<std::size_t> noisy_layer_indices(const Mlp& model);

}  // namespace varigrad
