#pragma once

#include <string>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::linalg {

// Eigenpairs of a symmetric matrix. Column i of `vectors` pairs with
// values[i]; values are sorted descending. Each column is sign-fixed so its
// largest-magnitude component is positive, which makes results reproducible
// bit-for-bit.
struct EigenDecomposition {
    std::vector<double> values;
    Matrix vectors;  // d×d, orthonormal columns
};

// Eigendecomposition of the uncentered second-moment matrix XᵀX of a
// training block. The residual-norm detector projects queries onto the
// trailing eigenvectors of this basis.
struct PrincipalBasis {
    EigenDecomposition decomposition;
    std::size_t d = 0;            // ambient dimension
    std::size_t source_rows = 0;  // n used to build the Gram matrix
    bool centered = false;
};

// Cyclic Jacobi sweeps; stops when the off-diagonal Frobenius mass falls
// below 1e-12 of the input's Frobenius norm, errors after 64 sweeps.
EigenDecomposition sym_eig(const Matrix& s);

PrincipalBasis principal_basis(const Matrix& x_train, bool centered = false);

// X · W⊥ where W⊥ spans the ⌈fraction·d⌉ smallest eigenvalues (minimum 1).
// Output columns keep the basis order (decreasing eigenvalue).
Matrix residual_project(const PrincipalBasis& basis, const Matrix& x, double keep_smallest_fraction);

// Number of dimensions residual_project keeps for a given fraction.
std::size_t residual_width(std::size_t d, double keep_smallest_fraction);

// Modified Gram-Schmidt over columns, run twice for orthogonality near
// machine precision. Throws NumericError when columns are linearly dependent.
Matrix orthonormalize_columns(const Matrix& m);

// Orthonormal d×d matrix from seeded Gaussian entries.
Matrix random_orthonormal(std::size_t d, Rng& rng);

// Binary cache: u64 d, u64 source_rows, u64 centered flag, d eigenvalues,
// d×d row-major eigenvectors, all little-endian.
void save_basis(const PrincipalBasis& basis, const std::string& path);
PrincipalBasis load_basis(const std::string& path);

}  // namespace tadlab::linalg
