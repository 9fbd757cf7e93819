#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tadlab {

// Contract violations (bad arguments, preconditions).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed input files (CSV cells, manifest fields).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally wrong inputs (missing columns, bad manifest schema).
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inputs that parse but violate data invariants (non-finite cells, bad labels).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures (non-convergence, NaN loss).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Dense row-major matrix
// ============================================================================
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool empty() const { return rows == 0 || cols == 0; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Matrix built from a subset of rows, in the given order.
    Matrix take_rows(const std::vector<std::size_t>& idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out(i, j) = (*this)(idx[i], j);
        return out;
    }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

inline double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double t = a[j] - b[j];
        s += t * t;
    }
    return s;
}

inline double dot(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
    return s;
}

inline double norm2(const double* a, std::size_t d) { return std::sqrt(dot(a, a, d)); }

}  // namespace tadlab
