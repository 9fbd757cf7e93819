#pragma once

#include "tadlab/common.hpp"

// Data-parallel inner loops used across the project. Every kernel has a
// serial variant and an OpenMP variant; each output element is owned by
// exactly one thread and accumulated in a fixed serial order, so the
// parallel results are bit-identical to the serial ones for any thread
// count. Tests assert this; tools/bench compares their throughput.

namespace tadlab::kernels {

// Global switch; 0 = use OpenMP default thread count, 1 = serial.
void set_threads(int n);
int threads();

// True when the current build and thread setting allow OpenMP dispatch.
// Callers parallelize loops whose iterations own disjoint output slots, so
// results never depend on this returning true or false.
bool parallel_enabled();

// C[m×n] = A[m×k] · B[k×n]
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_omp(const Matrix& a, const Matrix& b, Matrix& c);
Matrix matmul(const Matrix& a, const Matrix& b);

// C[m×n] = A[m×k] · B[n×k]ᵀ  (rows of B as columns)
void matmul_nt_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nt_omp(const Matrix& a, const Matrix& b, Matrix& c);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// C[k×n] = A[m×k]ᵀ · B[m×n]  (used for gradient accumulation; the reduction
// over m runs serially inside each output cell).
void matmul_tn_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn_omp(const Matrix& a, const Matrix& b, Matrix& c);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// G[d×d] = XᵀX
void gram_serial(const Matrix& x, Matrix& g);
void gram_omp(const Matrix& x, Matrix& g);
Matrix gram(const Matrix& x);

// D[m×n]: squared Euclidean distances between query and train rows.
void pairwise_sq_dists_serial(const Matrix& queries, const Matrix& train, Matrix& d);
void pairwise_sq_dists_omp(const Matrix& queries, const Matrix& train, Matrix& d);
Matrix pairwise_sq_dists(const Matrix& queries, const Matrix& train);

}  // namespace tadlab::kernels
