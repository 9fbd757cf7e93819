#include "tadlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tadlab/io.hpp"
#include "tadlab/kernels.hpp"

namespace tadlab::linalg {

namespace {

constexpr double kOffDiagTol = 1e-12;  // relative to ‖S‖_F
constexpr int kMaxSweeps = 64;

double max_abs(const Matrix& m) {
    double v = 0.0;
    for (double x : m.data) v = std::max(v, std::abs(x));
    return v;
}

double off_diag_frobenius(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Flip each eigenvector so its largest-magnitude component (first such index
// on ties) is positive.
void fix_signs(Matrix& v) {
    for (std::size_t col = 0; col < v.cols; ++col) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < v.rows; ++i) {
            const double a = std::abs(v(i, col));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (v(arg, col) < 0.0)
            for (std::size_t i = 0; i < v.rows; ++i) v(i, col) = -v(i, col);
    }
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& s) {
    if (s.rows != s.cols || s.rows == 0) throw ContractError("sym_eig: matrix must be square and nonempty");
    if (!s.all_finite()) throw ContractError("sym_eig: non-finite entries");
    const std::size_t d = s.rows;

    const double scale = max_abs(s);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::abs(s(i, j) - s(j, i)) > 1e-9 * std::max(scale, 1e-30))
                throw ContractError("sym_eig: matrix asymmetric beyond tolerance");

    Matrix a = s;
    // Symmetrize exactly so sweep arithmetic sees one consistent value.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = a(j, i) = m;
        }

    Matrix v(d, d);
    for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;

    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    frob = std::sqrt(frob);
    const double threshold = kOffDiagTol * frob;

    bool converged = off_diag_frobenius(a) <= threshold;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                const double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = a(p, i) = c * aip - sn * aiq;
                    a(i, q) = a(q, i) = sn * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - sn * viq;
                    v(i, q) = sn * vip + c * viq;
                }
            }
        }
        converged = off_diag_frobenius(a) <= threshold;
    }
    if (!converged) {
        std::ostringstream os;
        os << "sym_eig: no convergence after " << kMaxSweeps
           << " sweeps, off-diagonal residual " << off_diag_frobenius(a);
        throw NumericError(os.str());
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigenDecomposition out;
    out.values.resize(d);
    out.vectors = Matrix(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < d; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    fix_signs(out.vectors);
    return out;
}

PrincipalBasis principal_basis(const Matrix& x_train, bool centered) {
    if (x_train.rows < 1 || x_train.cols < 1)
        throw ContractError("principal_basis: need n >= 1 and d >= 1");
    Matrix g;
    if (centered) {
        Matrix xc = x_train;
        for (std::size_t j = 0; j < xc.cols; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < xc.rows; ++i) m += xc(i, j);
            m /= static_cast<double>(xc.rows);
            for (std::size_t i = 0; i < xc.rows; ++i) xc(i, j) -= m;
        }
        g = kernels::gram(xc);
    } else {
        g = kernels::gram(x_train);
    }

    PrincipalBasis basis;
    basis.decomposition = sym_eig(g);
    basis.d = x_train.cols;
    basis.source_rows = x_train.rows;
    basis.centered = centered;
    return basis;
}

std::size_t residual_width(std::size_t d, double keep_smallest_fraction) {
    if (!(keep_smallest_fraction > 0.0) || keep_smallest_fraction > 1.0)
        throw ContractError("residual_project: fraction must lie in (0, 1]");
    const auto m = static_cast<std::size_t>(
        std::ceil(keep_smallest_fraction * static_cast<double>(d)));
    return std::clamp<std::size_t>(m, 1, d);
}

Matrix residual_project(const PrincipalBasis& basis, const Matrix& x, double keep_smallest_fraction) {
    const std::size_t d = basis.d;
    if (x.cols != d) throw ContractError("residual_project: column count differs from basis dimension");
    const std::size_t m = residual_width(d, keep_smallest_fraction);
    const std::size_t first = d - m;  // descending order: smallest eigenvalues sit last

    const Matrix& v = basis.decomposition.vectors;
    Matrix w(d, m);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < m; ++j) w(i, j) = v(i, first + j);
    return kernels::matmul(x, w);
}

Matrix orthonormalize_columns(const Matrix& m) {
    Matrix q = m;
    const std::size_t rows = q.rows, cols = q.cols;
    if (cols > rows) throw ContractError("orthonormalize_columns: more columns than rows");
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < cols; ++j) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < rows; ++i) proj += q(i, k) * q(i, j);
                for (std::size_t i = 0; i < rows; ++i) q(i, j) -= proj * q(i, k);
            }
            double nrm = 0.0;
            for (std::size_t i = 0; i < rows; ++i) nrm += q(i, j) * q(i, j);
            nrm = std::sqrt(nrm);
            if (nrm < 1e-12) throw NumericError("orthonormalize_columns: rank-deficient input");
            for (std::size_t i = 0; i < rows; ++i) q(i, j) /= nrm;
        }
    }
    return q;
}

Matrix random_orthonormal(std::size_t d, Rng& rng) {
    if (d == 0) throw ContractError("random_orthonormal: d must be positive");
    Matrix g(d, d);
    for (double& v : g.data) v = rng.gaussian();
    return orthonormalize_columns(g);
}

void save_basis(const PrincipalBasis& basis, const std::string& path) {
    std::ostringstream os(std::ios::binary);
    io::write_u64(os, basis.d);
    io::write_u64(os, basis.source_rows);
    io::write_u64(os, basis.centered ? 1 : 0);
    io::write_f64_block(os, basis.decomposition.values.data(), basis.d);
    io::write_f64_block(os, basis.decomposition.vectors.data.data(), basis.d * basis.d);
    io::write_file(path, os.str());
}

PrincipalBasis load_basis(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("basis cache: cannot open '" + path + "'");
    PrincipalBasis basis;
    basis.d = io::read_u64(is);
    basis.source_rows = io::read_u64(is);
    basis.centered = io::read_u64(is) != 0;
    if (basis.d == 0 || basis.d > (1u << 20)) throw ParseError("basis cache: implausible dimension");
    basis.decomposition.values.resize(basis.d);
    io::read_f64_block(is, basis.decomposition.values.data(), basis.d);
    basis.decomposition.vectors = Matrix(basis.d, basis.d);
    io::read_f64_block(is, basis.decomposition.vectors.data.data(), basis.d * basis.d);
    if (!is) throw ParseError("basis cache: truncated file '" + path + "'");
    return basis;
}

}  // namespace tadlab::linalg
