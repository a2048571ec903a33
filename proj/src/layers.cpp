#include "varigrad/layers.hpp"

#include <cmath>
#include <vector>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

PosteriorFamily family_of(NoiseKind kind) {
    return kind == NoiseKind::TypeA ? PosteriorFamily::InputScales
                                    : PosteriorFamily::IndependentWeights;
}

void validate_noise(const NoiseSpec& noise) {
    switch (noise.kind) {
        case NoiseKind::BinaryDropout:
            if (!(noise.rate >= 0.0 && noise.rate < 1.0)) {
                throw DomainError("binary dropout rate must lie in [0, 1), got " +
                                  std::to_string(noise.rate));
            }
            break;
        case NoiseKind::GaussianDropoutFixed:
        case NoiseKind::TypeA:
        case NoiseKind::TypeB:
            if (!(noise.rate > 0.0 && noise.rate <= 1.0)) {
                throw DomainError("gaussian noise alpha must lie in (0, 1], got " +
                                  std::to_string(noise.rate));
            }
            break;
        case NoiseKind::None:
            break;
    }
}

// Reduce a full K×L log-alpha gradient onto the posterior's granularity.
Matrix reduce_weight_grad(const Matrix& full, Granularity granularity) {
    switch (granularity) {
        case Granularity::PerWeight:
            return full;
        case Granularity::PerInputNeuron: {
            Matrix out(full.rows(), 1);
            for (std::size_t i = 0; i < full.rows(); ++i)
                for (double v : full.row(i)) out[i] += v;
            return out;
        }
        case Granularity::PerLayer:
            return Matrix(1, 1, sum(full));
    }
    return full;
}

Matrix reduce_input_grad(const Matrix& per_input, Granularity granularity) {
    if (granularity == Granularity::PerLayer) return Matrix(1, 1, sum(per_input));
    return per_input;
}

Matrix linear(const Matrix& input, const Matrix& weights, const Matrix& bias) {
    return add_row_vector(matmul(input, weights), bias);
}

}  // namespace

DenseVariationalLayer::DenseVariationalLayer(std::size_t inputs, std::size_t outputs,
                                             NoiseSpec noise, Granularity granularity,
                                             RngStream& init_rng)
    : bias_(1, outputs), noise_(noise) {
    if (inputs == 0 || outputs == 0) throw ShapeError("layer dimensions must be positive");
    validate_noise(noise_);
    posterior_.theta = Matrix(inputs, outputs);
    const double bound = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (double& v : posterior_.theta.values()) v = bound * (2.0 * init_rng.uniform() - 1.0);
    posterior_.granularity = granularity;
    posterior_.family = family_of(noise_.kind);
    if (noise_.variational()) {
        const auto [rows, cols] = log_alpha_shape(granularity, posterior_.family, inputs, outputs);
        posterior_.log_alpha = Matrix(rows, cols, std::log(noise_.rate));
    }
}

DenseVariationalLayer::DenseVariationalLayer(DropoutPosterior posterior, Matrix bias,
                                             NoiseSpec noise)
    : posterior_(std::move(posterior)), bias_(std::move(bias)), noise_(noise) {
    validate_noise(noise_);
    if (bias_.rows() != 1 || bias_.cols() != posterior_.theta.cols()) {
        throw ShapeError("bias shape " + bias_.shape_string() + " does not match theta " +
                         posterior_.theta.shape_string());
    }
    posterior_.family = family_of(noise_.kind);
    if (noise_.variational()) validate_posterior(posterior_);
}

double DenseVariationalLayer::mean_alpha() const {
    switch (noise_.kind) {
        case NoiseKind::TypeA:
        case NoiseKind::TypeB: {
            double total = 0.0;
            for (double la : posterior_.log_alpha.values()) total += std::exp(la);
            return total / static_cast<double>(posterior_.log_alpha.size());
        }
        case NoiseKind::GaussianDropoutFixed:
            return noise_.rate;
        case NoiseKind::BinaryDropout:
            return noise_.rate / (1.0 - noise_.rate);
        case NoiseKind::None:
            return 0.0;
    }
    return 0.0;
}

void DenseVariationalLayer::check_mode(EstimatorMode mode) const {
    const bool samples_weights = mode == EstimatorMode::WeightPerDatapoint ||
                                 mode == EstimatorMode::WeightPerMinibatch;
    if (samples_weights && !noise_.variational()) {
        throw ConfigError(std::string("estimator mode ") + std::string(to_string(mode)) +
                          " requires typeA or typeB noise, layer has " +
                          std::string(to_string(noise_.kind)));
    }
}

LayerOutput DenseVariationalLayer::forward(const Matrix& input, EstimatorMode mode,
                                           RngStream& rng) const {
    if (input.cols() != inputs()) {
        throw ShapeError("layer forward: input " + input.shape_string() + " vs theta " +
                         theta().shape_string());
    }
    check_mode(mode);
    const std::size_t m_rows = input.rows();
    const std::size_t k_in = inputs();
    const std::size_t l_out = outputs();
    const Matrix& th = theta();

    LayerOutput result;
    ForwardCache& cache = result.cache;
    cache.mode = mode;
    cache.kind = noise_.kind;
    cache.input = input;

    if (mode == EstimatorMode::NoNoise || noise_.kind == NoiseKind::None) {
        result.output = linear(input, th, bias_);
        return result;
    }

    switch (noise_.kind) {
        case NoiseKind::TypeB: {
            const Matrix alpha = alpha_per_weight(posterior_);
            if (mode == EstimatorMode::LocalReparam) {
                // b = gamma + sqrt(delta) * zeta, gamma = A theta, delta = A^2 (alpha theta^2)
                const Matrix weight_var = hadamard(alpha, square(th));
                const Matrix gamma = matmul(input, th);
                cache.sqrt_delta = sqrt(matmul(square(input), weight_var));
                cache.noise = sample_standard_normal(m_rows, l_out, rng);
                Matrix out = add(gamma, hadamard(cache.sqrt_delta, cache.noise));
                result.output = add_row_vector(out, bias_);
            } else if (mode == EstimatorMode::WeightPerMinibatch) {
                cache.noise = sample_standard_normal(k_in, l_out, rng);
                Matrix weights(k_in, l_out);
                for (std::size_t i = 0; i < weights.size(); ++i)
                    weights[i] = th[i] * (1.0 + std::sqrt(alpha[i]) * cache.noise[i]);
                result.output = linear(input, weights, bias_);
            } else {
                // One weight matrix per row, generated row-of-theta at a time and never stored.
                cache.row_stream_key = rng.next_u64();
                const Matrix sqrt_alpha = sqrt(alpha);
                Matrix out(m_rows, l_out);
                std::vector<double> eps(l_out);
                for (std::size_t m = 0; m < m_rows; ++m) {
                    RngStream row_rng(cache.row_stream_key, m);
                    double* __restrict orow = out.row(m).data();
                    for (std::size_t i = 0; i < k_in; ++i) {
                        row_rng.fill_normal(eps);
                        const double a = input(m, i);
                        const double* trow = th.row(i).data();
                        const double* srow = sqrt_alpha.row(i).data();
                        for (std::size_t j = 0; j < l_out; ++j)
                            orow[j] += a * trow[j] * (1.0 + srow[j] * eps[j]);
                    }
                }
                result.output = add_row_vector(out, bias_);
            }
            return result;
        }
        case NoiseKind::TypeA:
        case NoiseKind::GaussianDropoutFixed: {
            const Matrix alpha = noise_.kind == NoiseKind::TypeA ? alpha_per_input(posterior_)
                                                                 : Matrix(k_in, 1, noise_.rate);
            if (mode == EstimatorMode::WeightPerMinibatch) {
                cache.noise = sample_standard_normal(1, k_in, rng);
            } else if (mode == EstimatorMode::WeightPerDatapoint) {
                cache.noise = Matrix(m_rows, k_in);
                const std::uint64_t key = rng.next_u64();
                for (std::size_t m = 0; m < m_rows; ++m) {
                    RngStream row_rng(key, m);
                    row_rng.fill_normal(cache.noise.row(m));
                }
            } else {
                cache.noise = sample_standard_normal(m_rows, k_in, rng);
            }
            const bool shared = cache.noise.rows() == 1 && m_rows != 1;
            Matrix noisy = input;
            for (std::size_t m = 0; m < m_rows; ++m) {
                auto z = cache.noise.row(shared ? 0 : m);
                auto row = noisy.row(m);
                for (std::size_t i = 0; i < k_in; ++i) row[i] *= 1.0 + std::sqrt(alpha[i]) * z[i];
            }
            result.output = linear(noisy, th, bias_);
            return result;
        }
        case NoiseKind::BinaryDropout: {
            auto dropped = forward_binary_dropout(input, noise_.rate, rng);
            cache.noise = std::move(dropped.mask);
            result.output = linear(dropped.output, th, bias_);
            return result;
        }
        case NoiseKind::None:
            break;
    }
    result.output = linear(input, th, bias_);
    return result;
}

LayerGradients DenseVariationalLayer::backward(const ForwardCache& cache,
                                               const Matrix& grad_output) const {
    const Matrix& input = cache.input;
    const std::size_t m_rows = input.rows();
    const std::size_t k_in = inputs();
    const std::size_t l_out = outputs();
    if (cache.kind != noise_.kind) {
        throw ConfigError("backward: cache was produced by a layer with different noise");
    }
    if (input.cols() != k_in) throw ConfigError("backward: cache input does not match layer");
    if (grad_output.rows() != m_rows || grad_output.cols() != l_out) {
        throw ShapeError("backward: output gradient " + grad_output.shape_string() +
                         " for batch of " + std::to_string(m_rows) + " and width " +
                         std::to_string(l_out));
    }
    const Matrix& th = theta();

    LayerGradients grads;
    grads.bias = column_sums(grad_output);
    if (noise_.variational()) grads.log_alpha = Matrix(log_alpha().rows(), log_alpha().cols());

    if (cache.mode == EstimatorMode::NoNoise || noise_.kind == NoiseKind::None) {
        grads.theta = matmul_tn(input, grad_output);
        grads.input = matmul_nt(grad_output, th);
        return grads;
    }

    switch (noise_.kind) {
        case NoiseKind::TypeB: {
            const Matrix alpha = alpha_per_weight(posterior_);
            if (cache.mode == EstimatorMode::LocalReparam) {
                // d/d delta = g * zeta / (2 sqrt(delta)); zero where delta vanishes.
                Matrix grad_delta(m_rows, l_out);
                for (std::size_t i = 0; i < grad_delta.size(); ++i) {
                    const double sd = cache.sqrt_delta[i];
                    grad_delta[i] = sd > 0.0 ? grad_output[i] * cache.noise[i] / (2.0 * sd) : 0.0;
                }
                const Matrix input_sq = square(input);
                const Matrix grad_weight_var = matmul_tn(input_sq, grad_delta);
                const Matrix weight_var = hadamard(alpha, square(th));

                grads.theta = matmul_tn(input, grad_output);
                for (std::size_t i = 0; i < grads.theta.size(); ++i)
                    grads.theta[i] += grad_weight_var[i] * 2.0 * alpha[i] * th[i];
                grads.log_alpha = reduce_weight_grad(hadamard(grad_weight_var, weight_var),
                                                     posterior_.granularity);

                grads.input = matmul_nt(grad_output, th);
                const Matrix through_var = matmul_nt(grad_delta, weight_var);
                for (std::size_t i = 0; i < grads.input.size(); ++i)
                    grads.input[i] += 2.0 * input[i] * through_var[i];
            } else if (cache.mode == EstimatorMode::WeightPerMinibatch) {
                const Matrix& eps = cache.noise;
                Matrix weights(k_in, l_out);
                Matrix grad_log_alpha(k_in, l_out);
                const Matrix grad_weights = matmul_tn(input, grad_output);
                grads.theta = Matrix(k_in, l_out);
                for (std::size_t i = 0; i < weights.size(); ++i) {
                    const double sa = std::sqrt(alpha[i]);
                    const double factor = 1.0 + sa * eps[i];
                    weights[i] = th[i] * factor;
                    grads.theta[i] = grad_weights[i] * factor;
                    grad_log_alpha[i] = grad_weights[i] * th[i] * sa * eps[i] * 0.5;
                }
                grads.log_alpha = reduce_weight_grad(grad_log_alpha, posterior_.granularity);
                grads.input = matmul_nt(grad_output, weights);
            } else {
                const Matrix sqrt_alpha = sqrt(alpha);
                grads.theta = Matrix(k_in, l_out);
                grads.input = Matrix(m_rows, k_in);
                Matrix grad_log_alpha(k_in, l_out);
                std::vector<double> eps(l_out);
                for (std::size_t m = 0; m < m_rows; ++m) {
                    RngStream row_rng(cache.row_stream_key, m);
                    const double* grow = grad_output.row(m).data();
                    for (std::size_t i = 0; i < k_in; ++i) {
                        row_rng.fill_normal(eps);
                        const double a = input(m, i);
                        const double* trow = th.row(i).data();
                        const double* srow = sqrt_alpha.row(i).data();
                        double* __restrict dth = grads.theta.row(i).data();
                        double* __restrict dla = grad_log_alpha.row(i).data();
                        double dinput = 0.0;
                        for (std::size_t j = 0; j < l_out; ++j) {
                            const double noise = srow[j] * eps[j];
                            const double ag = a * grow[j];
                            dth[j] += ag * (1.0 + noise);
                            dla[j] += ag * trow[j] * noise * 0.5;
                            dinput += grow[j] * trow[j] * (1.0 + noise);
                        }
                        grads.input(m, i) = dinput;
                    }
                }
                grads.log_alpha = reduce_weight_grad(grad_log_alpha, posterior_.granularity);
            }
            return grads;
        }
        case NoiseKind::TypeA:
        case NoiseKind::GaussianDropoutFixed: {
            const Matrix alpha = noise_.kind == NoiseKind::TypeA ? alpha_per_input(posterior_)
                                                                 : Matrix(k_in, 1, noise_.rate);
            const bool shared = cache.noise.rows() == 1 && m_rows != 1;
            Matrix xi(m_rows, k_in);
            for (std::size_t m = 0; m < m_rows; ++m) {
                auto z = cache.noise.row(shared ? 0 : m);
                for (std::size_t i = 0; i < k_in; ++i) xi(m, i) = 1.0 + std::sqrt(alpha[i]) * z[i];
            }
            grads.theta = matmul_tn(hadamard(input, xi), grad_output);
            const Matrix back = matmul_nt(grad_output, th);
            grads.input = hadamard(back, xi);
            if (noise_.kind == NoiseKind::TypeA) {
                Matrix per_input(k_in, 1);
                for (std::size_t m = 0; m < m_rows; ++m) {
                    auto z = cache.noise.row(shared ? 0 : m);
                    for (std::size_t i = 0; i < k_in; ++i)
                        per_input[i] += back(m, i) * input(m, i) * z[i];
                }
                for (std::size_t i = 0; i < k_in; ++i) per_input[i] *= 0.5 * std::sqrt(alpha[i]);
                grads.log_alpha = reduce_input_grad(per_input, posterior_.granularity);
            }
            return grads;
        }
        case NoiseKind::BinaryDropout: {
            const double keep_scale = 1.0 / (1.0 - noise_.rate);
            const Matrix scaled_mask = scale(cache.noise, keep_scale);
            grads.theta = matmul_tn(hadamard(input, scaled_mask), grad_output);
            grads.input = hadamard(matmul_nt(grad_output, th), scaled_mask);
            return grads;
        }
        case NoiseKind::None:
            break;
    }
    grads.theta = matmul_tn(input, grad_output);
    grads.input = matmul_nt(grad_output, th);
    return grads;
}

BinaryDropoutResult forward_binary_dropout(const Matrix& input, double p, RngStream& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw DomainError("binary dropout rate must lie in [0, 1), got " + std::to_string(p));
    }
    BinaryDropoutResult result{input, Matrix(input.rows(), input.cols())};
    const double keep = 1.0 - p;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double bit = rng.bernoulli(keep) ? 1.0 : 0.0;
        result.mask[i] = bit;
        result.output[i] = input[i] * bit / keep;
    }
    return result;
}

std::string_view to_string(EstimatorMode mode) {
    switch (mode) {
        case EstimatorMode::LocalReparam:
            return "local";
        case EstimatorMode::WeightPerDatapoint:
            return "per-datapoint";
        case EstimatorMode::WeightPerMinibatch:
            return "per-minibatch";
        case EstimatorMode::NoNoise:
            return "none";
    }
    return "?";
}

std::string_view to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::TypeA:
            return "typeA";
        case NoiseKind::TypeB:
            return "typeB";
        case NoiseKind::BinaryDropout:
            return "binary";
        case NoiseKind::GaussianDropoutFixed:
            return "gaussian-fixed";
        case NoiseKind::None:
            return "none";
    }
    return "?";
}

}  // namespace varigrad
