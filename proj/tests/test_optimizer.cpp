#include <doctest.h>

#include <cmath>
#include <vector>

#include "varigrad/errors.hpp"
#include "varigrad/optimizer.hpp"
#include "varigrad/rng.hpp"

using namespace varigrad;

TEST_CASE("zero gradients leave parameters unchanged") {
    Matrix theta = Matrix::from_rows({{0.5, -1.0}});
    Matrix log_alpha(1, 1, -0.7);
    const Matrix zero_t(1, 2), zero_a(1, 1);
    const std::vector<ParamSlot> slots = {{"theta", &theta, false}, {"log_alpha", &log_alpha, true}};
    const std::vector<const Matrix*> grads = {&zero_t, &zero_a};
    Adam adam;
    for (int i = 0; i < 5; ++i) adam.step(slots, grads);
    CHECK(theta == Matrix::from_rows({{0.5, -1.0}}));
    CHECK(log_alpha(0, 0) == -0.7);
}

TEST_CASE("log_alpha above zero is projected back to zero") {
    Matrix log_alpha(1, 1, 0.3);
    const Matrix zero(1, 1);
    const std::vector<ParamSlot> slots = {{"log_alpha", &log_alpha, true}};
    const std::vector<const Matrix*> grads = {&zero};
    Adam adam;
    adam.step(slots, grads);
    CHECK(log_alpha(0, 0) == 0.0);
}

TEST_CASE("first step on a unit gradient moves by the step size") {
    Matrix p(1, 1, 2.0);
    const Matrix g(1, 1, 1.0);
    const std::vector<ParamSlot> slots = {{"p", &p, false}};
    const std::vector<const Matrix*> grads = {&g};
    AdamConfig config;
    Adam adam(config);
    adam.step(slots, grads);
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    CHECK(std::abs(p(0, 0) - (2.0 + config.step_size / (1.0 + config.epsilon))) < 1e-15);
    CHECK(std::abs(p(0, 0) - 2.001) < 1e-9);
}

TEST_CASE("two steps against a hand computation") {
    Matrix p(1, 1, 0.0);
    Matrix g(1, 1, 0.5);
    const std::vector<ParamSlot> slots = {{"p", &p, false}};
    const std::vector<const Matrix*> grads = {&g};
    Adam adam;
    adam.step(slots, grads);
    g(0, 0) = -2.0;
    adam.step(slots, grads);
    const double m1 = 0.1 * 0.5, v1 = 0.001 * 0.25;
    const double step1 = 1e-3 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
    const double m2 = 0.9 * m1 + 0.1 * -2.0, v2 = 0.999 * v1 + 0.001 * 4.0;
    const double step2 = 1e-3 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.998001)) + 1e-8);
    CHECK(p(0, 0) == doctest::Approx(step1 + step2).epsilon(1e-12));
}

TEST_CASE("temporal average of constant iterates is the constant") {
    Matrix p(1, 1, 1.25);
    const Matrix zero(1, 1);
    const std::vector<ParamSlot> slots = {{"p", &p, false}};
    const std::vector<const Matrix*> grads = {&zero};
    Adam adam;
    CHECK_THROWS_AS(adam.averaged_params(), OptimizerError);
    adam.step(slots, grads);
    CHECK(adam.averaged_params()[0](0, 0) == doctest::Approx(1.25).epsilon(1e-14));
    for (int i = 0; i < 50; ++i) adam.step(slots, grads);
    CHECK(adam.averaged_params()[0](0, 0) == doctest::Approx(1.25).epsilon(1e-13));
}

TEST_CASE("temporal average of two iterates has the bias-corrected closed form") {
    Matrix p(1, 1, 0.0);
    Matrix g(1, 1, 1.0);
    const std::vector<ParamSlot> slots = {{"p", &p, false}};
    const std::vector<const Matrix*> grads = {&g};
    AdamConfig config;
    config.averaging_decay = 0.9;
    Adam adam(config);
    adam.step(slots, grads);
    const double p1 = p(0, 0);
    CHECK(adam.averaged_params()[0](0, 0) == doctest::Approx(p1).epsilon(1e-14));
    adam.step(slots, grads);
    const double p2 = p(0, 0);
    const double beta = 0.9;
    const double expected = (beta * (1 - beta) * p1 + (1 - beta) * p2) / (1 - beta * beta);
    CHECK(adam.averaged_params()[0](0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("non-finite gradients are rejected with the parameter path") {
    Matrix p(2, 2, 0.0);
    Matrix g(2, 2, 0.0);
    g(1, 0) = std::nan("");
    const std::vector<ParamSlot> slots = {{"layer1.theta", &p, false}};
    const std::vector<const Matrix*> grads = {&g};
    Adam adam;
    try {
        adam.step(slots, grads);
        FAIL("expected an optimizer error");
    } catch (const OptimizerError& e) {
        CHECK(std::string(e.what()).find("layer1.theta[1,0]") != std::string::npos);
    }
    CHECK(p == Matrix(2, 2, 0.0));
    const Matrix wrong(1, 2);
    const std::vector<const Matrix*> bad_shape = {&wrong};
    CHECK_THROWS_AS(adam.step(slots, bad_shape), ShapeError);
}

TEST_CASE("constraint holds after many steps and runs are deterministic") {
    auto run = [] {
        Matrix la(3, 1, -0.5);
        Matrix g(3, 1);
        const std::vector<ParamSlot> slots = {{"log_alpha", &la, true}};
        const std::vector<const Matrix*> grads = {&g};
        RngStream rng(4, 0);
        Adam adam;
        for (int i = 0; i < 1000; ++i) {
            for (double& v : g.values()) v = rng.normal() + 0.5;
            adam.step(slots, grads);
            for (double v : la.values()) REQUIRE(v <= 0.0);
        }
        return la;
    };
    CHECK(run() == run());
}
