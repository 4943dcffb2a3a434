#include "smore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "smore/error.hpp"

namespace smore::kernels {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// One output row of C = A * B, accumulating over k in ascending order.
inline void matmul_row(const double* A, const double* B, double* C, std::size_t i, std::size_t k,
                       std::size_t n) {
  double* crow = C + i * n;
  std::memset(crow, 0, n * sizeof(double));
  const double* arow = A + i * k;
  for (std::size_t t = 0; t < k; ++t) {
    const double a = arow[t];
    const double* brow = B + t * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
  }
}

inline void matmul_nt_row(const double* A, const double* B, double* C, std::size_t i,
                          std::size_t k, std::size_t n) {
  const double* arow = A + i * k;
  double* crow = C + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = B + j * k;
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += arow[t] * brow[t];
    crow[j] = s;
  }
}

inline void matmul_tn_row(const double* A, const double* B, double* C, std::size_t i,
                          std::size_t k, std::size_t m, std::size_t n) {
  double* crow = C + i * n;
  std::memset(crow, 0, n * sizeof(double));
  for (std::size_t t = 0; t < k; ++t) {
    const double a = A[t * m + i];
    const double* brow = B + t * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
  }
}

inline void matmul_nt_f32_row(const float* F, const double* W, double* C, std::size_t i,
                              std::size_t k, std::size_t n) {
  const float* frow = F + i * k;
  double* crow = C + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* wrow = W + j * k;
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += static_cast<double>(frow[t]) * wrow[t];
    crow[j] = s;
  }
}

inline void matmul_tn_f32_row(const double* G, const float* F, double* W, std::size_t i,
                              std::size_t m, std::size_t n, std::size_t k) {
  double* wrow = W + i * k;
  std::memset(wrow, 0, k * sizeof(double));
  for (std::size_t r = 0; r < m; ++r) {
    const double g = G[r * n + i];
    const float* frow = F + r * k;
    for (std::size_t t = 0; t < k; ++t) wrow[t] += g * static_cast<double>(frow[t]);
  }
}

inline void spmm_row(const SparseMatrix& S, const double* X, double* Y, std::size_t r,
                     std::size_t d) {
  double* yrow = Y + r * d;
  std::memset(yrow, 0, d * sizeof(double));
  for (std::size_t p = S.indptr[r]; p < S.indptr[r + 1]; ++p) {
    const double v = S.vals[p];
    const double* xrow = X + static_cast<std::size_t>(S.indices[p]) * d;
    for (std::size_t j = 0; j < d; ++j) yrow[j] += v * xrow[j];
  }
}

inline std::vector<double> row_norms(const float* X, std::size_t rows, std::size_t dim) {
  std::vector<double> norms(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
    const float* row = X + i * dim;
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += static_cast<double>(row[j]) * row[j];
    norms[i] = std::sqrt(s);
  }
  return norms;
}

// Candidates for one row, ordered by (similarity desc, index asc).
inline std::vector<std::pair<uint32_t, double>> cosine_topk_row(
    const float* X, const std::vector<double>& norms, std::size_t rows, std::size_t dim,
    std::size_t a, std::size_t k) {
  std::vector<std::pair<uint32_t, double>> cand;
  if (norms[a] == 0.0) return cand;
  cand.reserve(rows - 1);
  const float* ra = X + a * dim;
  for (std::size_t b = 0; b < rows; ++b) {
    if (b == a) continue;
    double sim = 0.0;
    if (norms[b] != 0.0) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j)
        dot += static_cast<double>(ra[j]) * static_cast<double>(X[b * dim + j]);
      sim = dot / (norms[a] * norms[b]);
    }
    cand.emplace_back(static_cast<uint32_t>(b), sim);
  }
  const std::size_t keep = std::min(k, cand.size());
  auto better = [](const std::pair<uint32_t, double>& x, const std::pair<uint32_t, double>& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  };
  std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(), better);
  cand.resize(keep);
  return cand;
}

inline std::vector<uint32_t> topk_ranked_row(const double* scores, std::size_t nitems,
                                             const std::vector<uint32_t>& mask, std::size_t k) {
  std::vector<char> masked(nitems, 0);
  for (uint32_t m : mask) masked[m] = 1;
  std::vector<uint32_t> cand;
  cand.reserve(nitems);
  for (uint32_t i = 0; i < nitems; ++i)
    if (!masked[i]) cand.push_back(i);
  const std::size_t keep = std::min(k, cand.size());
  auto better = [scores](uint32_t x, uint32_t y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;
  };
  std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(), better);
  cand.resize(keep);
  return cand;
}

}  // namespace

void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) matmul_row(A, B, C, i, k, n);
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_nt_row(A, B, C, i, k, n);
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t k, std::size_t m,
               std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_tn_row(A, B, C, i, k, m, n);
}

void matmul_nt_f32(const float* F, const double* W, double* C, std::size_t m, std::size_t k,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_nt_f32_row(F, W, C, i, k, n);
}

void matmul_tn_f32(const double* G, const float* F, double* W, std::size_t m, std::size_t n,
                   std::size_t k) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    matmul_tn_f32_row(G, F, W, i, m, n, k);
}

void spmm(const SparseMatrix& S, const double* X, double* Y, std::size_t d) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(S.rows); ++r)
    spmm_row(S, X, Y, r, d);
}

std::vector<std::vector<std::pair<uint32_t, double>>> cosine_topk(const float* X, std::size_t rows,
                                                                  std::size_t dim, std::size_t k,
                                                                  std::size_t* zero_norm_rows) {
  const std::vector<double> norms = row_norms(X, rows, dim);
  std::size_t zeros = 0;
  for (double n : norms)
    if (n == 0.0) ++zeros;
  if (zero_norm_rows) *zero_norm_rows = zeros;
  std::vector<std::vector<std::pair<uint32_t, double>>> out(rows);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(rows); ++a)
    out[a] = cosine_topk_row(X, norms, rows, dim, a, k);
  return out;
}

std::vector<std::vector<uint32_t>> topk_ranked(const double* scores, std::size_t nrows,
                                               std::size_t nitems,
                                               const std::vector<std::vector<uint32_t>>& mask,
                                               std::size_t k) {
  if (mask.size() != nrows) throw ShapeError("topk_ranked mask row count mismatch");
  std::vector<std::vector<uint32_t>> out(nrows);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r)
    out[r] = topk_ranked_row(scores + r * nitems, nitems, mask[r], k);
  return out;
}

namespace serial {

void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(A, B, C, i, k, n);
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(A, B, C, i, k, n);
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t k, std::size_t m,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_tn_row(A, B, C, i, k, m, n);
}

void matmul_nt_f32(const float* F, const double* W, double* C, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_f32_row(F, W, C, i, k, n);
}

void matmul_tn_f32(const double* G, const float* F, double* W, std::size_t m, std::size_t n,
                   std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) matmul_tn_f32_row(G, F, W, i, m, n, k);
}

void spmm(const SparseMatrix& S, const double* X, double* Y, std::size_t d) {
  for (std::size_t r = 0; r < S.rows; ++r) spmm_row(S, X, Y, r, d);
}

std::vector<std::vector<std::pair<uint32_t, double>>> cosine_topk(const float* X, std::size_t rows,
                                                                  std::size_t dim, std::size_t k,
                                                                  std::size_t* zero_norm_rows) {
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j)
      s += static_cast<double>(X[i * dim + j]) * X[i * dim + j];
    norms[i] = std::sqrt(s);
  }
  std::size_t zeros = 0;
  for (double n : norms)
    if (n == 0.0) ++zeros;
  if (zero_norm_rows) *zero_norm_rows = zeros;
  std::vector<std::vector<std::pair<uint32_t, double>>> out(rows);
  for (std::size_t a = 0; a < rows; ++a) out[a] = cosine_topk_row(X, norms, rows, dim, a, k);
  return out;
}

std::vector<std::vector<uint32_t>> topk_ranked(const double* scores, std::size_t nrows,
                                               std::size_t nitems,
                                               const std::vector<std::vector<uint32_t>>& mask,
                                               std::size_t k) {
  if (mask.size() != nrows) throw ShapeError("topk_ranked mask row count mismatch");
  std::vector<std::vector<uint32_t>> out(nrows);
  for (std::size_t r = 0; r < nrows; ++r)
    out[r] = topk_ranked_row(scores + r * nitems, nitems, mask[r], k);
  return out;
}

}  // namespace serial

}  // namespace smore::kernels
