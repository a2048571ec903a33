#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "varigrad/diagnostics.hpp"
#include "varigrad/errors.hpp"
#include "varigrad/model.hpp"

using namespace varigrad;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = 2.0 * rng.uniform() - 1.0;
    return m;
}

std::vector<int> random_labels(std::size_t n, int classes, RngStream& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(classes));
    return y;
}

Mlp small_mlp(std::vector<std::size_t> widths, NoiseSpec input, NoiseSpec hidden,
              std::uint64_t seed = 1, Granularity g = Granularity::PerLayer) {
    RngStream rng(seed, 0);
    MlpConfig config{std::move(widths), Activation::ReLU, input, hidden, g};
    Mlp model = Mlp::build(config, rng);
    for (auto& layer : model.layers()) {
        for (double& v : layer.bias().values()) v = 0.2 * (rng.uniform() - 0.5);
        for (double& v : layer.log_alpha().values()) v = std::log(0.1 + 0.7 * rng.uniform());
    }
    return model;
}

}  // namespace

TEST_CASE("uniform logits give log(1/C) per example") {
    const auto ll = softmax_cross_entropy(Matrix(3, 10), std::vector<int>{0, 4, 9});
    CHECK(ll.total / 3 == doctest::Approx(std::log(0.1)).epsilon(1e-14));
}

TEST_CASE("huge logits on the true class do not overflow") {
    Matrix logits(2, 3);
    logits(0, 1) = 1000.0;
    logits(1, 2) = 1000.0;
    const auto ll = softmax_cross_entropy(logits, std::vector<int>{1, 2});
    CHECK(std::isfinite(ll.total));
    CHECK(ll.total <= 0.0);
    CHECK(ll.total > -1e-300);
    CHECK(all_finite(ll.gradient));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
    RngStream rng(2, 0);
    Matrix logits = random_matrix(4, 3, rng);
    const std::vector<int> labels{0, 2, 1, 2};
    const auto base = softmax_cross_entropy(logits, labels);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double saved = logits[i];
        logits[i] = saved + h;
        const double up = -softmax_cross_entropy(logits, labels).total;
        logits[i] = saved - h;
        const double down = -softmax_cross_entropy(logits, labels).total;
        logits[i] = saved;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(numeric - base.gradient[i]) / std::abs(base.gradient[i]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("labels out of range are rejected") {
    CHECK_THROWS_AS(softmax_cross_entropy(Matrix(1, 3), std::vector<int>{3}), DomainError);
    CHECK_THROWS_AS(softmax_cross_entropy(Matrix(1, 3), std::vector<int>{-1}), DomainError);
}

TEST_CASE("consecutive layer widths must chain") {
    RngStream rng(1, 0);
    std::vector<DenseVariationalLayer> layers;
    layers.emplace_back(4, 3, NoiseSpec::none(), Granularity::PerLayer, rng);
    layers.emplace_back(2, 2, NoiseSpec::none(), Granularity::PerLayer, rng);
    CHECK_THROWS_AS(Mlp(std::move(layers), Activation::ReLU), ShapeError);
}

TEST_CASE("elbo decomposes into expected log-likelihood and negative KL") {
    RngStream rng(3, 0);
    const Mlp model = small_mlp({5, 6, 3}, NoiseSpec::type_b(0.25), NoiseSpec::type_b(0.5));
    const Matrix x = random_matrix(7, 5, rng);
    const auto y = random_labels(7, 3, rng);
    ElboOptions options;
    options.dataset_size = 70;
    RngStream noise(4, 0);
    const auto r = elbo_minibatch(model, x, y, options, noise);
    CHECK(std::abs(r.report.elbo - (r.report.expected_ll_estimate + r.report.neg_kl)) < 1e-12);
    CHECK(r.report.per_layer_kl.size() == 2);
    CHECK(r.report.neg_kl == doctest::Approx(r.report.per_layer_kl[0] + r.report.per_layer_kl[1]));

    options.kl_scale = 1e-300;
    RngStream again(4, 0);
    const auto tiny = elbo_minibatch(model, x, y, options, again);
    CHECK(tiny.report.elbo == doctest::Approx(tiny.report.expected_ll_estimate).epsilon(1e-15));
    CHECK(tiny.report.expected_ll_estimate == r.report.expected_ll_estimate);
}

TEST_CASE("a duplicated datapoint scales to N times its log-likelihood") {
    RngStream rng(5, 0);
    const Mlp model = small_mlp({4, 5, 3}, NoiseSpec::none(), NoiseSpec::none());
    const Matrix one = random_matrix(1, 4, rng);
    Matrix many(6, 4);
    for (std::size_t m = 0; m < 6; ++m)
        for (std::size_t k = 0; k < 4; ++k) many(m, k) = one(0, k);
    ElboOptions options;
    options.mode = EstimatorMode::NoNoise;
    options.dataset_size = 100;
    RngStream noise(1, 0);
    const auto single = softmax_cross_entropy(
        network_forward(model, one, EstimatorMode::NoNoise, noise).logits, std::vector<int>{2});
    const auto r = elbo_minibatch(model, many, std::vector<int>(6, 2), options, noise);
    CHECK(r.report.expected_ll_estimate == doctest::Approx(100 * single.total).epsilon(1e-14));
}

TEST_CASE("averaging over every single-point minibatch recovers the full log-likelihood") {
    RngStream rng(6, 0);
    const Mlp model = small_mlp({3, 4, 2}, NoiseSpec::none(), NoiseSpec::none());
    const Matrix x = random_matrix(16, 3, rng);
    const auto y = random_labels(16, 2, rng);
    ElboOptions options;
    options.mode = EstimatorMode::NoNoise;
    options.dataset_size = 16;
    RngStream noise(1, 0);
    double mean = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        const std::vector<std::size_t> idx{i};
        mean += elbo_minibatch(model, gather_rows(x, idx), std::vector<int>{y[i]}, options, noise)
                    .report.expected_ll_estimate;
    }
    mean /= 16.0;
    const double full =
        softmax_cross_entropy(network_forward(model, x, EstimatorMode::NoNoise, noise).logits, y).total;
    CHECK(mean == doctest::Approx(full).epsilon(1e-13));
}

TEST_CASE("quadrature KL is evaluation-only") {
    RngStream rng(7, 0);
    const Mlp model = small_mlp({3, 4, 2}, NoiseSpec::type_b(0.25), NoiseSpec::type_b(0.5));
    const Matrix x = random_matrix(2, 3, rng);
    ElboOptions options;
    options.kl_mode = KlMode::Quadrature;
    options.dataset_size = 2;
    CHECK_THROWS_AS(elbo_minibatch(model, x, std::vector<int>{0, 1}, options, rng), ConfigError);
    options.compute_gradients = false;
    CHECK_NOTHROW(elbo_minibatch(model, x, std::vector<int>{0, 1}, options, rng));
    options.dataset_size = 1;
    CHECK_THROWS_AS(elbo_minibatch(model, x, std::vector<int>{0, 1}, options, rng), DomainError);
}

TEST_CASE("full network gradient matches finite differences with frozen noise") {
    RngStream rng(8, 0);
    const Matrix x = random_matrix(5, 8, rng);
    const auto y = random_labels(5, 3, rng);
    for (NoiseKind kind : {NoiseKind::TypeA, NoiseKind::TypeB}) {
        const Mlp model = small_mlp({8, 8, 3}, {kind, 0.25}, {kind, 0.5});
        for (EstimatorMode mode : {EstimatorMode::LocalReparam, EstimatorMode::WeightPerDatapoint,
                                   EstimatorMode::WeightPerMinibatch, EstimatorMode::NoNoise}) {
            AuditObjective objective;
            objective.mode = mode;
            objective.dataset_size = 50;
            objective.noise_seed = 31;
            for (const auto& group : finite_difference_audit(model, x, y, objective)) {
                CAPTURE(to_string(kind));
                CAPTURE(to_string(mode));
                CAPTURE(group.name);
                CHECK(group.max_relative_error < 1e-4);
            }
        }
    }
}

TEST_CASE("stochastic modes agree on the mean gradient") {
    RngStream rng(9, 0);
    const Mlp model = small_mlp({4, 3, 2}, NoiseSpec::type_b(0.5), NoiseSpec::type_b(0.5), 9);
    const Matrix x = random_matrix(3, 4, rng);
    const std::vector<int> y{0, 1, 1};
    ElboOptions options;
    options.dataset_size = 3;
    const std::vector<EstimatorMode> modes = {EstimatorMode::LocalReparam,
                                              EstimatorMode::WeightPerDatapoint,
                                              EstimatorMode::WeightPerMinibatch};
    const std::size_t draws = 10'000;
    std::vector<std::vector<double>> means, errors;
    for (EstimatorMode mode : modes) {
        options.mode = mode;
        RngStream noise(10, 0);
        std::vector<double> sum, sum_sq;
        for (std::size_t t = 0; t < draws; ++t) {
            const auto r = elbo_minibatch(model, x, y, options, noise);
            std::vector<double> flat;
            for (const auto& g : r.gradients)
                flat.insert(flat.end(), g.theta.values().begin(), g.theta.values().end());
            if (sum.empty()) {
                sum.assign(flat.size(), 0.0);
                sum_sq.assign(flat.size(), 0.0);
            }
            for (std::size_t i = 0; i < flat.size(); ++i) {
                sum[i] += flat[i];
                sum_sq[i] += flat[i] * flat[i];
            }
        }
        std::vector<double> mean(sum.size()), se(sum.size());
        for (std::size_t i = 0; i < sum.size(); ++i) {
            mean[i] = sum[i] / draws;
            se[i] = std::sqrt((sum_sq[i] / draws - mean[i] * mean[i]) / draws);
        }
        means.push_back(mean);
        errors.push_back(se);
    }
    for (std::size_t a = 0; a < modes.size(); ++a)
        for (std::size_t b = a + 1; b < modes.size(); ++b)
            for (std::size_t i = 0; i < means[a].size(); ++i) {
                const double combined = std::hypot(errors[a][i], errors[b][i]);
                CAPTURE(to_string(modes[a]));
                CAPTURE(to_string(modes[b]));
                CAPTURE(i);
                CHECK(std::abs(means[a][i] - means[b][i]) <= 3.0 * combined);
            }
}

TEST_CASE("predictions") {
    RngStream rng(11, 0);
    Mlp model = small_mlp({4, 6, 3}, NoiseSpec::type_b(0.25), NoiseSpec::type_b(0.5));
    const Matrix x = random_matrix(5, 4, rng);
    const Matrix mean = predict(model, x, PredictionMode::mean_weights());
    CHECK(predict(model, x, PredictionMode::mean_weights()) == mean);

    const Matrix mc = predict(model, x, PredictionMode::mc_average(20, 3));
    for (std::size_t m = 0; m < mc.rows(); ++m) {
        double total = 0.0;
        for (double p : mc.row(m)) total += p;
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(predict(model, x, PredictionMode::mc_average(0, 3)), DomainError);

    for (auto& layer : model.layers()) layer.log_alpha() = Matrix(1, 1, std::log(1e-14));
    CHECK(max_abs_diff(predict(model, x, PredictionMode::mc_average(5, 3)),
                       predict(model, x, PredictionMode::mean_weights())) < 1e-5);
}

TEST_CASE("classification error counts arg-max mistakes") {
    RngStream rng(12, 0);
    const Mlp model = small_mlp({4, 3}, NoiseSpec::none(), NoiseSpec::none());
    const Matrix x = random_matrix(10, 4, rng);
    const Matrix probs = predict(model, x, PredictionMode::mean_weights());
    std::vector<int> right(10);
    for (std::size_t m = 0; m < 10; ++m) {
        auto row = probs.row(m);
        right[m] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    CHECK(classification_error(model, x, right, PredictionMode::mean_weights()) == 0.0);
    std::vector<int> wrong = right;
    wrong[0] = (wrong[0] + 1) % 3;
    wrong[5] = (wrong[5] + 1) % 3;
    CHECK(classification_error(model, x, wrong, PredictionMode::mean_weights()) == doctest::Approx(0.2));
}

TEST_CASE("parameter slots round-trip through assign_parameters") {
    Mlp model = small_mlp({3, 4, 2}, NoiseSpec::none(), NoiseSpec::type_a(0.5),
                          2, Granularity::PerInputNeuron);
    const auto slots = model.parameter_slots(true);
    REQUIRE(slots.size() == 5);
    CHECK(slots[0].name == "layer0.theta");
    CHECK(slots[1].name == "layer0.bias");
    CHECK(slots[3].name == "layer1.log_alpha");
    CHECK(slots[3].log_alpha);
    CHECK(model.parameter_slots(false).size() == 4);
    std::vector<Matrix> values;
    for (const auto& s : slots) values.push_back(scale(*s.value, 2.0));
    model.assign_parameters(values, true);
    CHECK(model.layers()[1].log_alpha().rows() == 4);
    CHECK(model.layers()[1].theta() == values[2]);
    values.pop_back();
    CHECK_THROWS_AS(model.assign_parameters(values, true), ShapeError);
}
