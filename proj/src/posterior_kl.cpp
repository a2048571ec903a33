#include "varigrad/posterior_kl.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

constexpr int kGaussOrder = 20;
// Geometric grading toward the log singularity: panel edges b, b/2, ..., b/2^kGradedLevels.
constexpr int kGradedLevels = 60;
constexpr double kHalfWidthInSd = 12.0;

struct GaussLegendre {
    std::array<double, kGaussOrder> nodes{};
    std::array<double, kGaussOrder> weights{};
};

// Nodes/weights on [-1, 1] via Newton iteration on P_n.
GaussLegendre make_gauss_legendre() {
    GaussLegendre rule;
    const int n = kGaussOrder;
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double derivative = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p_prev = 1.0;
            double p = x;
            for (int k = 2; k <= n; ++k) {
                const double p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
                p_prev = p;
                p = p_next;
            }
            derivative = n * (x * p - p_prev) / (x * x - 1.0);
            const double step = p / derivative;
            x -= step;
            if (std::abs(step) < 1e-16) break;
        }
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * derivative * derivative);
    }
    return rule;
}

const GaussLegendre& gauss_legendre() {
    static const GaussLegendre rule = make_gauss_legendre();
    return rule;
}

template <class F>
double integrate_panel(const F& f, double a, double b) {
    const auto& rule = gauss_legendre();
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double total = 0.0;
    for (int i = 0; i < kGaussOrder; ++i) total += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return total * half;
}

template <class F>
double integrate_uniform(const F& f, double a, double b, int panels) {
    double total = 0.0;
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) total += integrate_panel(f, a + p * width, a + (p + 1) * width);
    return total;
}

// Signed integral from 0 to b (b may be negative) with panels graded toward 0.
template <class F>
double integrate_graded_from_zero(const F& f, double b, int subdivisions) {
    double total = 0.0;
    double outer = b;
    for (int level = 0; level < kGradedLevels; ++level) {
        const double inner = 0.5 * outer;
        total += integrate_uniform(f, inner, outer, subdivisions);
        outer = inner;
    }
    return total + integrate_panel(f, 0.0, outer);
}

double exact_constant() {
    static const double value = expect_log_abs_eps(1.0);
    return value;
}

void check_log_alpha(double log_alpha) {
    if (!std::isfinite(log_alpha)) throw DomainError("log_alpha must be finite");
    if (log_alpha > 0.0) {
        throw ConstraintError("log_alpha " + std::to_string(log_alpha) + " > 0 (alpha > 1)");
    }
}

double polynomial_term(double alpha) {
    return alpha * (kKlC1 + alpha * (kKlC2 + alpha * kKlC3));
}

// Number of KL units that share one log_alpha entry at (row, col).
double units_per_entry(const DropoutPosterior& posterior) {
    const double k = static_cast<double>(posterior.theta.rows());
    const double l = static_cast<double>(posterior.theta.cols());
    const bool weights = posterior.family == PosteriorFamily::IndependentWeights;
    switch (posterior.granularity) {
        case Granularity::PerLayer:
            return weights ? k * l : k;
        case Granularity::PerInputNeuron:
            return weights ? l : 1.0;
        case Granularity::PerWeight:
            return 1.0;
    }
    return 1.0;
}

}  // namespace

std::pair<std::size_t, std::size_t> log_alpha_shape(Granularity granularity,
                                                    PosteriorFamily family, std::size_t k,
                                                    std::size_t l) {
    switch (granularity) {
        case Granularity::PerLayer:
            return {1, 1};
        case Granularity::PerInputNeuron:
            return {k, 1};
        case Granularity::PerWeight:
            if (family == PosteriorFamily::InputScales) {
                throw ConfigError("per-weight granularity is undefined for input-scale noise");
            }
            return {k, l};
    }
    throw ConfigError("unknown granularity");
}

void validate_posterior(const DropoutPosterior& posterior) {
    const auto [rows, cols] = log_alpha_shape(posterior.granularity, posterior.family,
                                              posterior.theta.rows(), posterior.theta.cols());
    if (posterior.log_alpha.rows() != rows || posterior.log_alpha.cols() != cols) {
        throw ShapeError("log_alpha shape " + posterior.log_alpha.shape_string() +
                         " inconsistent with granularity " +
                         std::string(to_string(posterior.granularity)));
    }
}

Matrix alpha_per_input(const DropoutPosterior& posterior) {
    const std::size_t k = posterior.theta.rows();
    Matrix out(k, 1);
    switch (posterior.granularity) {
        case Granularity::PerLayer:
            for (std::size_t i = 0; i < k; ++i) out[i] = std::exp(posterior.log_alpha[0]);
            break;
        case Granularity::PerInputNeuron:
            for (std::size_t i = 0; i < k; ++i) out[i] = std::exp(posterior.log_alpha[i]);
            break;
        case Granularity::PerWeight:
            throw ConfigError("alpha_per_input: per-weight posterior has no per-input alpha");
    }
    return out;
}

Matrix alpha_per_weight(const DropoutPosterior& posterior) {
    const std::size_t k = posterior.theta.rows();
    const std::size_t l = posterior.theta.cols();
    if (posterior.granularity == Granularity::PerWeight) {
        return elementwise(posterior.log_alpha, [](double v) { return std::exp(v); });
    }
    const Matrix per_input = alpha_per_input(posterior);
    Matrix out(k, l);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j) out(i, j) = per_input[i];
    return out;
}

double expect_log_abs_eps(double alpha, int resolution) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw DomainError("expect_log_abs_eps: alpha must be positive, got " +
                          std::to_string(alpha));
    }
    if (resolution < 1) throw DomainError("expect_log_abs_eps: resolution must be >= 1");
    const double sd = std::sqrt(alpha);
    const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
    const auto integrand = [sd, norm](double x) {
        const double z = (x - 1.0) / sd;
        return std::log(std::abs(x)) * norm * std::exp(-0.5 * z * z);
    };
    const double lo = 1.0 - kHalfWidthInSd * sd;
    const double hi = 1.0 + kHalfWidthInSd * sd;
    const int body_panels = 24 * resolution;
    if (lo > 0.0) return integrate_uniform(integrand, lo, hi, body_panels);
    // The singularity at 0 lies inside (or on the edge of) the window: split there.
    double total = integrate_graded_from_zero(integrand, hi, resolution);
    if (lo < 0.0) total -= integrate_graded_from_zero(integrand, lo, resolution);
    return total;
}

double neg_kl_per_unit(double log_alpha, KlMode mode) {
    check_log_alpha(log_alpha);
    const double alpha = std::exp(log_alpha);
    const double base = 0.5 * log_alpha + exact_constant();
    switch (mode) {
        case KlMode::Polynomial:
            return base + polynomial_term(alpha);
        case KlMode::LowerBound:
            return base;
        case KlMode::Quadrature:
            return base - expect_log_abs_eps(alpha);
    }
    throw ConfigError("unknown KL mode");
}

double neg_kl_per_unit_grad(double log_alpha, KlMode mode) {
    check_log_alpha(log_alpha);
    const double alpha = std::exp(log_alpha);
    switch (mode) {
        case KlMode::Polynomial:
            return 0.5 + alpha * (kKlC1 + alpha * (2.0 * kKlC2 + alpha * 3.0 * kKlC3));
        case KlMode::LowerBound:
            return 0.5;
        case KlMode::Quadrature:
            throw ConfigError("quadrature KL mode provides no gradient");
    }
    throw ConfigError("unknown KL mode");
}

NegKl neg_kl_total(const DropoutPosterior& posterior, KlMode mode, double kl_scale) {
    if (!(kl_scale > 0.0) || !std::isfinite(kl_scale)) {
        throw DomainError("kl_scale must be positive and finite");
    }
    validate_posterior(posterior);
    const double multiplicity = units_per_entry(posterior);
    const Matrix& log_alpha = posterior.log_alpha;
    NegKl result;
    double total = 0.0;
    for (double la : log_alpha.values()) total += neg_kl_per_unit(la, mode);
    result.value = kl_scale * (multiplicity * total);
    if (mode != KlMode::Quadrature) {
        result.grad_log_alpha = elementwise(log_alpha, [&](double la) {
            return kl_scale * multiplicity * neg_kl_per_unit_grad(la, mode);
        });
    }
    return result;
}

std::string_view to_string(KlMode mode) {
    switch (mode) {
        case KlMode::Polynomial:
            return "poly";
        case KlMode::LowerBound:
            return "bound";
        case KlMode::Quadrature:
            return "quad";
    }
    return "?";
}

std::string_view to_string(Granularity granularity) {
    switch (granularity) {
        case Granularity::PerLayer:
            return "per-layer";
        case Granularity::PerInputNeuron:
            return "per-neuron";
        case Granularity::PerWeight:
            return "per-weight";
    }
    return "?";
}

}  // namespace varigrad
