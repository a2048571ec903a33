#include "varigrad/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

// c[m, :] += a[m, k] * b[k, :], the i-k-j ordering keeps the inner loop contiguous.
void accumulate_product(const double* a, const double* b, double* c, std::size_t m_rows,
                        std::size_t k_dim, std::size_t n_cols) {
    for (std::size_t m = 0; m < m_rows; ++m) {
        double* __restrict crow = c + m * n_cols;
        const double* arow = a + m * k_dim;
        for (std::size_t k = 0; k < k_dim; ++k) {
            const double av = arow[k];
            const double* __restrict brow = b + k * n_cols;
            for (std::size_t n = 0; n < n_cols; ++n) crow[n] += av * brow[n];
        }
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                         shape_string());
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(values));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_string() + " x " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    accumulate_product(a.values().data(), b.values().data(), out.values().data(), a.rows(),
                       a.cols(), b.cols());
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + a.shape_string() + "^T x " + b.shape_string());
    }
    const std::size_t k_out = a.cols();
    const std::size_t n_out = b.cols();
    Matrix out(k_out, n_out);
    double* c = out.values().data();
    for (std::size_t m = 0; m < a.rows(); ++m) {
        const double* arow = a.row(m).data();
        const double* __restrict brow = b.row(m).data();
        for (std::size_t k = 0; k < k_out; ++k) {
            const double av = arow[k];
            double* __restrict crow = c + k * n_out;
            for (std::size_t n = 0; n < n_out; ++n) crow[n] += av * brow[n];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + a.shape_string() + " x " + b.shape_string() + "^T");
    }
    return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Matrix scale(const Matrix& a, double factor) {
    return elementwise(a, [factor](double v) { return v * factor; });
}

void add_in_place(Matrix& target, const Matrix& increment) {
    require_same_shape(target, increment, "add_in_place");
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += increment[i];
}

Matrix square(const Matrix& a) {
    return elementwise(a, [](double v) { return v * v; });
}

Matrix sqrt(const Matrix& a) {
    for (double v : a.values()) {
        if (v < 0.0) throw DomainError("sqrt: negative entry " + std::to_string(v));
    }
    return elementwise(a, [](double v) { return std::sqrt(v); });
}

Matrix add_row_vector(const Matrix& a, const Matrix& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ShapeError("add_row_vector: " + a.shape_string() + " + " + row.shape_string());
    }
    Matrix out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) dst[c] += row[c];
    }
    return out;
}

Matrix column_sums(const Matrix& a) {
    Matrix out(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += src[c];
    }
    return out;
}

double sum(const Matrix& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return total;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

bool all_finite(const Matrix& a) {
    return std::all_of(a.values().begin(), a.values().end(),
                       [](double v) { return std::isfinite(v); });
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
        auto src = a.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace varigrad
