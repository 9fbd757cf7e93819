#include "tadlab/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tadlab::kernels {

namespace {
int g_threads = 0;

bool use_omp() {
#ifdef _OPENMP
    return g_threads != 1;
#else
    return false;
#endif
}

void check_mm(const Matrix& a, const Matrix& b, bool bt) {
    const std::size_t inner = bt ? b.cols : b.rows;
    if (a.cols != inner) throw ContractError("matmul: inner dimensions differ");
}
}  // namespace

void set_threads(int n) {
    g_threads = n;
#ifdef _OPENMP
    if (n > 1) omp_set_num_threads(n);
#endif
}

int threads() { return g_threads; }

bool parallel_enabled() { return use_omp(); }

// ---------------------------------------------------------------------------

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    check_mm(a, b, false);
    c = Matrix(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

void matmul_omp(const Matrix& a, const Matrix& b, Matrix& c) {
    check_mm(a, b, false);
    c = Matrix(a.rows, b.cols);
    const std::int64_t m = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* ai = a.row(static_cast<std::size_t>(i));
        double* ci = c.row(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c;
    if (use_omp())
        matmul_omp(a, b, c);
    else
        matmul_serial(a, b, c);
    return c;
}

// ---------------------------------------------------------------------------

void matmul_nt_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    check_mm(a, b, true);
    c = Matrix(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] = dot(ai, b.row(j), a.cols);
    }
}

void matmul_nt_omp(const Matrix& a, const Matrix& b, Matrix& c) {
    check_mm(a, b, true);
    c = Matrix(a.rows, b.rows);
    const std::int64_t m = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* ai = a.row(static_cast<std::size_t>(i));
        double* ci = c.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] = dot(ai, b.row(j), a.cols);
    }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix c;
    if (use_omp())
        matmul_nt_omp(a, b, c);
    else
        matmul_nt_serial(a, b, c);
    return c;
}

// ---------------------------------------------------------------------------

void matmul_tn_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows) throw ContractError("matmul_tn: row counts differ");
    c = Matrix(a.cols, b.cols);
    for (std::size_t i = 0; i < a.cols; ++i) {
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < a.rows; ++r) s += a(r, i) * b(r, j);
            ci[j] = s;
        }
    }
}

void matmul_tn_omp(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows) throw ContractError("matmul_tn: row counts differ");
    c = Matrix(a.cols, b.cols);
    const std::int64_t m = static_cast<std::int64_t>(a.cols);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        double* ci = c.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < a.rows; ++r)
                s += a(r, static_cast<std::size_t>(i)) * b(r, j);
            ci[j] = s;
        }
    }
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix c;
    if (use_omp())
        matmul_tn_omp(a, b, c);
    else
        matmul_tn_serial(a, b, c);
    return c;
}

// ---------------------------------------------------------------------------

namespace {
// One gram cell: serial reduction over all rows, order fixed by row index.
double gram_cell(const Matrix& x, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) s += x(r, i) * x(r, j);
    return s;
}
}  // namespace

void gram_serial(const Matrix& x, Matrix& g) {
    g = Matrix(x.cols, x.cols);
    for (std::size_t i = 0; i < x.cols; ++i)
        for (std::size_t j = i; j < x.cols; ++j) {
            const double v = gram_cell(x, i, j);
            g(i, j) = v;
            g(j, i) = v;
        }
}

void gram_omp(const Matrix& x, Matrix& g) {
    g = Matrix(x.cols, x.cols);
    const std::int64_t d = static_cast<std::int64_t>(x.cols);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < d; ++i)
        for (std::size_t j = static_cast<std::size_t>(i); j < x.cols; ++j) {
            const double v = gram_cell(x, static_cast<std::size_t>(i), j);
            g(static_cast<std::size_t>(i), j) = v;
            g(j, static_cast<std::size_t>(i)) = v;
        }
}

Matrix gram(const Matrix& x) {
    Matrix g;
    if (use_omp())
        gram_omp(x, g);
    else
        gram_serial(x, g);
    return g;
}

// ---------------------------------------------------------------------------

void pairwise_sq_dists_serial(const Matrix& queries, const Matrix& train, Matrix& d) {
    if (queries.cols != train.cols) throw ContractError("pairwise: dimensionality differs");
    d = Matrix(queries.rows, train.rows);
    for (std::size_t i = 0; i < queries.rows; ++i) {
        const double* qi = queries.row(i);
        double* di = d.row(i);
        for (std::size_t j = 0; j < train.rows; ++j) di[j] = sq_dist(qi, train.row(j), queries.cols);
    }
}

void pairwise_sq_dists_omp(const Matrix& queries, const Matrix& train, Matrix& d) {
    if (queries.cols != train.cols) throw ContractError("pairwise: dimensionality differs");
    d = Matrix(queries.rows, train.rows);
    const std::int64_t m = static_cast<std::int64_t>(queries.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* qi = queries.row(static_cast<std::size_t>(i));
        double* di = d.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < train.rows; ++j) di[j] = sq_dist(qi, train.row(j), queries.cols);
    }
}

Matrix pairwise_sq_dists(const Matrix& queries, const Matrix& train) {
    Matrix d;
    if (use_omp())
        pairwise_sq_dists_omp(queries, train, d);
    else
        pairwise_sq_dists_serial(queries, train, d);
    return d;
}

}  // namespace tadlab::kernels
