#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "smore/tensor.hpp"

namespace smore::kernels {

// Thread control for the OpenMP kernels. 0 keeps the runtime default.
void set_threads(int n);
int max_threads();

// Every kernel below parallelizes only over independent output rows and keeps
// the per-element accumulation order identical to the serial reference, so
// parallel results are bitwise equal to serial ones at any thread count.

// C[m x n] = A[m x k] * B[k x n]
void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n);
// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n);
// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(const double* A, const double* B, double* C, std::size_t k, std::size_t m,
               std::size_t n);
// C[m x n] = F[m x k](f32) * W[n x k]^T, accumulated in double
void matmul_nt_f32(const float* F, const double* W, double* C, std::size_t m, std::size_t k,
                   std::size_t n);
// W[n x k] = G[m x n]^T * F[m x k](f32)
void matmul_tn_f32(const double* G, const float* F, double* W, std::size_t m, std::size_t n,
                   std::size_t k);
// Y[S.rows x d] = S * X[S.cols x d]
void spmm(const SparseMatrix& S, const double* X, double* Y, std::size_t d);

// Row-wise top-k cosine similarity over f32 features. Returns per-row
// neighbor lists as (col, similarity), k entries max, self excluded, ordered
// by descending similarity with ties broken by smaller column index.
// Zero-norm rows produce empty lists; their count is reported if asked.
std::vector<std::vector<std::pair<uint32_t, double>>> cosine_topk(
    const float* X, std::size_t rows, std::size_t dim, std::size_t k,
    std::size_t* zero_norm_rows = nullptr);

// Top-k indices per scored row with training items masked out.
// scores: nrows x nitems; mask[r] lists item columns forced to the bottom.
// Ties broken by smaller item index.
std::vector<std::vector<uint32_t>> topk_ranked(
    const double* scores, std::size_t nrows, std::size_t nitems,
    const std::vector<std::vector<uint32_t>>& mask, std::size_t k);

// Straightforward single-threaded reference implementations, kept for
// equivalence tests and the kernel benchmark.
namespace serial {
void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n);
void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_tn(const double* A, const double* B, double* C, std::size_t k, std::size_t m,
               std::size_t n);
void matmul_nt_f32(const float* F, const double* W, double* C, std::size_t m, std::size_t k,
                   std::size_t n);
void matmul_tn_f32(const double* G, const float* F, double* W, std::size_t m, std::size_t n,
                   std::size_t k);
void spmm(const SparseMatrix& S, const double* X, double* Y, std::size_t d);
std::vector<std::vector<std::pair<uint32_t, double>>> cosine_topk(
    const float* X, std::size_t rows, std::size_t dim, std::size_t k,
    std::size_t* zero_norm_rows = nullptr);
std::vector<std::vector<uint32_t>> topk_ranked(
    const double* scores, std::size_t nrows, std::size_t nitems,
    const std::vector<std::vector<uint32_t>>& mask, std::size_t k);
}  // namespace serial

}  // namespace smore::kernels
