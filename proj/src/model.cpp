#include "varigrad/model.hpp"

#include <algorithm>
#include <cmath>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

double activate(Activation activation, double x) {
    if (activation == Activation::ReLU) return x > 0.0 ? x : 0.0;
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double activation_slope(Activation activation, double x) {
    if (activation == Activation::ReLU) return x > 0.0 ? 1.0 : 0.0;
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

Mlp::Mlp(std::vector<DenseVariationalLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
    if (layers_.empty()) throw ConfigError("mlp: at least one layer is required");
    for (std::size_t l = 1; l < layers_.size(); ++l) {
        if (layers_[l].inputs() != layers_[l - 1].outputs()) {
            throw ShapeError("mlp: layer " + std::to_string(l) + " expects " +
                             std::to_string(layers_[l].inputs()) + " inputs but layer " +
                             std::to_string(l - 1) + " produces " +
                             std::to_string(layers_[l - 1].outputs()));
        }
    }
}

Mlp Mlp::build(const MlpConfig& config, RngStream& init_rng) {
    if (config.widths.size() < 2) throw ConfigError("mlp: need input and output widths");
    std::vector<DenseVariationalLayer> layers;
    for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
        const NoiseSpec& noise = l == 0 ? config.input_noise : config.hidden_noise;
        layers.emplace_back(config.widths[l], config.widths[l + 1], noise, config.granularity,
                            init_rng);
    }
    return Mlp(std::move(layers), config.activation);
}

std::vector<ParamSlot> Mlp::parameter_slots(bool include_log_alpha) {
    std::vector<ParamSlot> slots;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& layer = layers_[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        slots.push_back({prefix + "theta", &layer.theta(), false});
        if (include_log_alpha && layer.has_variational_alpha()) {
            slots.push_back({prefix + "log_alpha", &layer.log_alpha(), true});
        }
        slots.push_back({prefix + "bias", &layer.bias(), false});
    }
    return slots;
}

void Mlp::assign_parameters(std::span<const Matrix> values, bool include_log_alpha) {
    auto slots = parameter_slots(include_log_alpha);
    if (slots.size() != values.size()) {
        throw ShapeError("assign_parameters: expected " + std::to_string(slots.size()) +
                         " matrices, got " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].value->same_shape(values[i])) {
            throw ShapeError("assign_parameters: shape mismatch for " + slots[i].name);
        }
        *slots[i].value = values[i];
    }
}

std::vector<const Matrix*> gradient_slots(const Mlp& model, const ModelGradients& grads,
                                          bool include_log_alpha) {
    if (grads.size() != model.layers().size()) {
        throw ShapeError("gradient_slots: gradient count does not match layer count");
    }
    std::vector<const Matrix*> out;
    for (std::size_t l = 0; l < grads.size(); ++l) {
        out.push_back(&grads[l].theta);
        if (include_log_alpha && model.layers()[l].has_variational_alpha()) {
            out.push_back(&grads[l].log_alpha);
        }
        out.push_back(&grads[l].bias);
    }
    return out;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t m = 0; m < logits.rows(); ++m) {
        auto row = logits.row(m);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        auto dst = out.row(m);
        for (std::size_t c = 0; c < row.size(); ++c) total += dst[c] = std::exp(row[c] - peak);
        for (double& v : dst) v /= total;
    }
    return out;
}

LogLikelihood softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows()) + " rows");
    }
    const auto classes = static_cast<int>(logits.cols());
    LogLikelihood result{0.0, Matrix(logits.rows(), logits.cols())};
    for (std::size_t m = 0; m < logits.rows(); ++m) {
        const int label = labels[m];
        if (label < 0 || label >= classes) {
            throw DomainError("softmax_cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
        }
        auto row = logits.row(m);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double v : row) total += std::exp(v - peak);
        const double log_norm = peak + std::log(total);
        result.total += row[label] - log_norm;
        auto grad = result.gradient.row(m);
        for (std::size_t c = 0; c < row.size(); ++c) grad[c] = std::exp(row[c] - log_norm);
        grad[label] -= 1.0;
    }
    return result;
}

NetworkPass network_forward(const Mlp& model, const Matrix& inputs, EstimatorMode mode,
                            RngStream& rng) {
    const auto& layers = model.layers();
    NetworkPass pass;
    pass.caches.reserve(layers.size());
    const std::uint64_t pass_key = rng.next_u64();
    Matrix hidden = inputs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        RngStream layer_rng(pass_key, l);
        auto out = layers[l].forward(hidden, mode, layer_rng);
        pass.caches.push_back(std::move(out.cache));
        if (l + 1 == layers.size()) {
            pass.logits = std::move(out.output);
        } else {
            hidden = elementwise(out.output,
                                 [act = model.activation()](double x) { return activate(act, x); });
            pass.pre_activations.push_back(std::move(out.output));
        }
    }
    return pass;
}

ModelGradients network_backward(const Mlp& model, const NetworkPass& pass,
                                const Matrix& grad_logits) {
    const auto& layers = model.layers();
    ModelGradients grads(layers.size());
    Matrix upstream = grad_logits;
    for (std::size_t l = layers.size(); l-- > 0;) {
        grads[l] = layers[l].backward(pass.caches[l], upstream);
        if (l > 0) {
            const Matrix& pre = pass.pre_activations[l - 1];
            upstream = std::move(grads[l].input);
            for (std::size_t i = 0; i < upstream.size(); ++i)
                upstream[i] *= activation_slope(model.activation(), pre[i]);
            grads[l].input = Matrix();
        }
    }
    return grads;
}

ElboResult elbo_minibatch(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                          const ElboOptions& options, RngStream& rng) {
    const std::size_t batch = inputs.rows();
    if (batch == 0) throw DomainError("elbo_minibatch: empty minibatch");
    if (options.dataset_size < batch) {
        throw DomainError("elbo_minibatch: dataset size " + std::to_string(options.dataset_size) +
                          " smaller than minibatch " + std::to_string(batch));
    }
    if (options.compute_gradients && options.kl_mode == KlMode::Quadrature) {
        throw ConfigError("quadrature KL mode provides no gradient; use poly or bound");
    }

    const NetworkPass pass = network_forward(model, inputs, options.mode, rng);
    const LogLikelihood ll = softmax_cross_entropy(pass.logits, labels);
    const double data_scale =
        static_cast<double>(options.dataset_size) / static_cast<double>(batch);

    ElboResult result;
    ElboReport& report = result.report;
    report.expected_ll_estimate = data_scale * ll.total;
    std::vector<NegKl> kl_terms;
    for (const auto& layer : model.layers()) {
        if (layer.has_variational_alpha()) {
            kl_terms.push_back(neg_kl_total(layer.posterior(), options.kl_mode, options.kl_scale));
        } else {
            kl_terms.push_back(NegKl{});
        }
        report.per_layer_kl.push_back(kl_terms.back().value);
        report.neg_kl += kl_terms.back().value;
    }
    report.elbo = report.expected_ll_estimate + report.neg_kl;

    if (options.compute_gradients) {
        result.gradients = network_backward(model, pass, scale(ll.gradient, -data_scale));
        for (std::size_t l = 0; l < model.layers().size(); ++l) {
            if (kl_terms[l].grad_log_alpha) {
                add_in_place(result.gradients[l].log_alpha, *kl_terms[l].grad_log_alpha);
            }
        }
    }
    return result;
}

Matrix predict(const Mlp& model, const Matrix& inputs, const PredictionMode& mode) {
    if (mode.kind == PredictionMode::Kind::MeanWeights) {
        RngStream unused(0, 0);
        return softmax(network_forward(model, inputs, EstimatorMode::NoNoise, unused).logits);
    }
    if (mode.draws == 0) throw DomainError("predict: Monte Carlo averaging needs draws >= 1");
    RngStream rng(mode.seed, 0);
    Matrix average(inputs.rows(), model.num_classes());
    for (std::size_t t = 0; t < mode.draws; ++t) {
        add_in_place(average,
                     softmax(network_forward(model, inputs, EstimatorMode::LocalReparam, rng).logits));
    }
    return scale(average, 1.0 / static_cast<double>(mode.draws));
}

double classification_error(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                            const PredictionMode& mode) {
    if (labels.size() != inputs.rows()) throw ShapeError("classification_error: label count");
    if (labels.empty()) return 0.0;
    const Matrix probs = predict(model, inputs, mode);
    std::size_t wrong = 0;
    for (std::size_t m = 0; m < probs.rows(); ++m) {
        auto row = probs.row(m);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        if (best != labels[m]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

std::string_view to_string(Activation activation) {
    return activation == Activation::ReLU ? "relu" : "softplus";
}

}  // namespace varigrad
