#pragma once

#include <cstdint>
#include <string_view>

#include "varigrad/matrix.hpp"
#include "varigrad/posterior_kl.hpp"
#include "varigrad/rng.hpp"

namespace varigrad {

enum class NoiseKind {
    TypeB,                 ///< independent weight noise, q(w_ij) = N(theta_ij, alpha theta_ij^2)
    TypeA,                 ///< correlated weight noise, w_i = s_i theta_i, q(s_i) = N(1, alpha)
    BinaryDropout,         ///< Bernoulli mask on the layer input, rate p
    GaussianDropoutFixed,  ///< N(1, alpha) multiplicative input noise with alpha held fixed
    None,
};

/// Noise configuration of one layer.
///
/// `rate` is the dropout rate p for BinaryDropout, the fixed alpha for GaussianDropoutFixed
/// and the initial alpha for TypeA/TypeB; unused for None.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double rate = 0.0;

    static NoiseSpec none() { return {NoiseKind::None, 0.0}; }
    static NoiseSpec type_a(double initial_alpha) { return {NoiseKind::TypeA, initial_alpha}; }
    static NoiseSpec type_b(double initial_alpha) { return {NoiseKind::TypeB, initial_alpha}; }
    static NoiseSpec binary(double p) { return {NoiseKind::BinaryDropout, p}; }
    static NoiseSpec gaussian_fixed(double alpha) { return {NoiseKind::GaussianDropoutFixed, alpha}; }

    bool variational() const { return kind == NoiseKind::TypeA || kind == NoiseKind::TypeB; }
};

/// How stochasticity enters the forward pass.
enum class EstimatorMode { LocalReparam, WeightPerDatapoint, WeightPerMinibatch, NoNoise };

/// Everything backward() needs to differentiate the realized (noise-fixed) forward pass.
struct ForwardCache {
    EstimatorMode mode = EstimatorMode::NoNoise;
    NoiseKind kind = NoiseKind::None;
    Matrix input;
    /// zeta (TypeB local, M×L), standard normals z behind xi = 1 + sqrt(alpha) z (TypeA and
    /// Gaussian dropout, M×K), eps (TypeB per-minibatch, K×L) or the Bernoulli mask (M×K).
    Matrix noise;
    /// sqrt(delta), TypeB local reparameterization only.
    Matrix sqrt_delta;
    /// Key of the per-row streams for TypeB weight-per-datapoint; noise is regenerated.
    std::uint64_t row_stream_key = 0;
};

struct LayerGradients {
    Matrix theta;
    Matrix log_alpha;  ///< empty unless the layer has variational noise
    Matrix bias;
    Matrix input;
};

struct LayerOutput {
    Matrix output;
    ForwardCache cache;
};

class DenseVariationalLayer {
public:
    /// theta ~ U(-1/sqrt(K), 1/sqrt(K)), bias 0, log_alpha = log(initial alpha).
    DenseVariationalLayer(std::size_t inputs, std::size_t outputs, NoiseSpec noise,
                          Granularity granularity, RngStream& init_rng);
    DenseVariationalLayer(DropoutPosterior posterior, Matrix bias, NoiseSpec noise);

    std::size_t inputs() const { return posterior_.theta.rows(); }
    std::size_t outputs() const { return posterior_.theta.cols(); }
    const NoiseSpec& noise() const { return noise_; }
    const DropoutPosterior& posterior() const { return posterior_; }
    DropoutPosterior& posterior() { return posterior_; }
    const Matrix& theta() const { return posterior_.theta; }
    const Matrix& log_alpha() const { return posterior_.log_alpha; }
    const Matrix& bias() const { return bias_; }
    Matrix& theta() { return posterior_.theta; }
    Matrix& log_alpha() { return posterior_.log_alpha; }
    Matrix& bias() { return bias_; }

    bool has_variational_alpha() const { return noise_.variational(); }
    /// Mean noise variance alpha of the layer (fixed or learned); 0 for noise-free layers.
    double mean_alpha() const;

    LayerOutput forward(const Matrix& input, EstimatorMode mode, RngStream& rng) const;
    LayerGradients backward(const ForwardCache& cache, const Matrix& grad_output) const;

private:
    void check_mode(EstimatorMode mode) const;

    DropoutPosterior posterior_;
    Matrix bias_;
    NoiseSpec noise_;
};

struct BinaryDropoutResult {
    Matrix output;
    Matrix mask;
};

/// A ∘ mask / (1 - p) with mask ~ Bernoulli(1 - p).
BinaryDropoutResult forward_binary_dropout(const Matrix& input, double p, RngStream& rng);

std::string_view to_string(EstimatorMode mode);
std::string_view to_string(NoiseKind kind);

}  // namespace varigrad
