#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "varigrad/layers.hpp"
#include "varigrad/optimizer.hpp"
#include "varigrad/posterior_kl.hpp"

namespace varigrad {

enum class Activation { ReLU, Softplus };

struct MlpConfig {
    /// Input width, hidden widths..., class count.
    std::vector<std::size_t> widths;
    Activation activation = Activation::ReLU;
    /// Noise on the first layer (its input is the data).
    NoiseSpec input_noise = NoiseSpec::none();
    /// Noise on every later layer.
    NoiseSpec hidden_noise = NoiseSpec::none();
    Granularity granularity = Granularity::PerLayer;
};

/// Multi-layer perceptron of dense variational layers with a softmax output.
class Mlp {
public:
    Mlp(std::vector<DenseVariationalLayer> layers, Activation activation);
    static Mlp build(const MlpConfig& config, RngStream& init_rng);

    const std::vector<DenseVariationalLayer>& layers() const { return layers_; }
    std::vector<DenseVariationalLayer>& layers() { return layers_; }
    Activation activation() const { return activation_; }
    std::size_t input_dim() const { return layers_.front().inputs(); }
    std::size_t num_classes() const { return layers_.back().outputs(); }

    /// Optimizer slots in a fixed order: per layer theta, [log_alpha], bias.
    std::vector<ParamSlot> parameter_slots(bool include_log_alpha = true);
    /// Copies values in parameter_slots() order back into the model.
    void assign_parameters(std::span<const Matrix> values, bool include_log_alpha = true);

private:
    std::vector<DenseVariationalLayer> layers_;
    Activation activation_;
};

using ModelGradients = std::vector<LayerGradients>;

/// Gradient pointers aligned with Mlp::parameter_slots(include_log_alpha).
std::vector<const Matrix*> gradient_slots(const Mlp& model, const ModelGradients& grads,
                                          bool include_log_alpha = true);

struct LogLikelihood {
    /// Sum over rows of log softmax(logits)[label].
    double total = 0.0;
    /// softmax - onehot: the gradient of the cross-entropy, i.e. of -total.
    Matrix gradient;
};

LogLikelihood softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);
Matrix softmax(const Matrix& logits);

struct ElboReport {
    /// (N / M) * minibatch log-likelihood.
    double expected_ll_estimate = 0.0;
    double neg_kl = 0.0;
    double elbo = 0.0;
    std::vector<double> per_layer_kl;
};

struct ElboOptions {
    EstimatorMode mode = EstimatorMode::LocalReparam;
    KlMode kl_mode = KlMode::Polynomial;
    double kl_scale = 1.0;
    std::size_t dataset_size = 0;
    /// Quadrature KL is only available when gradients are not requested.
    bool compute_gradients = true;
};

struct ElboResult {
    ElboReport report;
    /// Gradients of the ELBO (an objective to maximize).
    ModelGradients gradients;
};

/// SGVB estimate of the lower bound on one minibatch, with one noise draw per layer.
ElboResult elbo_minibatch(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                          const ElboOptions& options, RngStream& rng);

/// Forward pass to logits with caches, plus the matching backward pass.
struct NetworkPass {
    std::vector<ForwardCache> caches;
    std::vector<Matrix> pre_activations;
    Matrix logits;
};
NetworkPass network_forward(const Mlp& model, const Matrix& inputs, EstimatorMode mode,
                            RngStream& rng);
ModelGradients network_backward(const Mlp& model, const NetworkPass& pass,
                                const Matrix& grad_logits);

struct PredictionMode {
    enum class Kind { MeanWeights, McAverage } kind = Kind::MeanWeights;
    std::size_t draws = 1;
    std::uint64_t seed = 0;

    static PredictionMode mean_weights() { return {}; }
    static PredictionMode mc_average(std::size_t draws, std::uint64_t seed) {
        return {Kind::McAverage, draws, seed};
    }
};

/// Class probabilities, M×C.
Matrix predict(const Mlp& model, const Matrix& inputs, const PredictionMode& mode);
/// Fraction of rows whose arg-max prediction differs from the label.
double classification_error(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                            const PredictionMode& mode);

std::string_view to_string(Activation activation);

}  // namespace varigrad
