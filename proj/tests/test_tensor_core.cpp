#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "varigrad/errors.hpp"
#include "varigrad/matrix.hpp"
#include "varigrad/rng.hpp"

using namespace varigrad;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double lo = -1.0,
                     double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = lo + (hi - lo) * rng.uniform();
    return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("matmul by identity returns the right operand") {
    RngStream rng(1, 0);
    const Matrix w = random_matrix(2, 3, rng);
    CHECK(matmul(Matrix::identity(2), w) == w);
}

TEST_CASE("matmul of a row and a column of ones sums the row") {
    const Matrix out = matmul(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{1}, {1}}));
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 1);
    CHECK(out(0, 0) == 3.0);
}

TEST_CASE("matmul matches a naive triple loop") {
    RngStream rng(2, 0);
    const Matrix a = random_matrix(7, 5, rng);
    const Matrix b = random_matrix(5, 3, rng);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
            CHECK(std::abs(c(i, j) - s) < 1e-12);
        }
}

TEST_CASE("transposed products agree with explicit transposes") {
    RngStream rng(3, 0);
    const Matrix a = random_matrix(6, 4, rng);
    const Matrix b = random_matrix(6, 3, rng);
    const Matrix c = random_matrix(5, 4, rng);
    CHECK(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, c), matmul(a, transpose(c))) < 1e-12);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("matmul is associative up to rounding") {
    RngStream rng(4, 0);
    const Matrix a = random_matrix(8, 8, rng);
    const Matrix b = random_matrix(8, 8, rng);
    const Matrix c = random_matrix(8, 8, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
}

TEST_CASE("hadamard with ones is the identity") {
    RngStream rng(5, 0);
    const Matrix a = random_matrix(3, 4, rng);
    CHECK(hadamard(a, Matrix(3, 4, 1.0)) == a);
    CHECK_THROWS_AS(hadamard(a, Matrix(4, 3, 1.0)), ShapeError);
}

TEST_CASE("square and sqrt") {
    CHECK(square(Matrix::from_rows({{-2, 3}})) == Matrix::from_rows({{4, 9}}));
    RngStream rng(6, 0);
    const Matrix a = random_matrix(5, 5, rng);
    const Matrix back = sqrt(square(a));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(back[i] == doctest::Approx(std::abs(a[i])).epsilon(1e-15));
    CHECK_THROWS_AS(sqrt(Matrix::from_rows({{1, -1e-300}})), DomainError);
}

TEST_CASE("elementwise applies the map to every entry") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(elementwise(a, [](double x) { return 10 * x; }) == Matrix::from_rows({{10, 20}, {30, 40}}));
}

TEST_CASE("row vector broadcast and column sums") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(add_row_vector(a, Matrix::from_rows({{10, 20}})) == Matrix::from_rows({{11, 22}, {13, 24}}));
    CHECK(column_sums(a) == Matrix::from_rows({{4, 6}}));
    CHECK_THROWS_AS(add_row_vector(a, Matrix(2, 1)), ShapeError);
}

TEST_CASE("rng streams are reproducible per seed and stream id") {
    RngStream a(42, 7);
    RngStream b(42, 7);
    RngStream c(42, 8);
    const Matrix x = sample_standard_normal(4, 5, a);
    CHECK(x == sample_standard_normal(4, 5, b));
    CHECK_FALSE(x == sample_standard_normal(4, 5, c));
}

TEST_CASE("philox matches the published known-answer vectors") {
    // Random123 kat_vectors, philox4x32_10 with zero and all-ones inputs.
    const auto zero = RngStream::philox_block(0, {0, 0, 0, 0});
    CHECK(zero == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto ones = RngStream::philox_block(0xffffffffffffffffull,
                                              {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
    CHECK(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("a million normal draws have unit moments") {
    RngStream rng(2015, 0);
    const std::size_t n = 1'000'000;
    std::vector<double> draws(n);
    rng.fill_normal(draws);
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : draws) var += (v - mean) * (v - mean);
    var /= (n - 1);
    CHECK(std::abs(mean) < 0.01);
    CHECK(var > 0.99);
    CHECK(var < 1.01);
}

TEST_CASE("normal draws pass a Kolmogorov-Smirnov check") {
    RngStream rng(99, 3);
    const Matrix draws = sample_standard_normal(1, 100'000, rng);
    std::vector<double> sorted(draws.values().begin(), draws.values().end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = normal_cdf(sorted[i]);
        d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
    }
    CHECK(d < 0.01);
}

TEST_CASE("uniform draws lie in (0, 1] and uniform_index stays in range") {
    RngStream rng(11, 0);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
        CHECK(rng.uniform_index(7) < 7u);
    }
}
