#pragma once

// Internal dense kernels. Every output entry is accumulated over the inner
// index in ascending order, one multiply-add at a time, so results do not
// depend on how rows are blocked or split across threads.

#include "ega/contrastive.hpp"
#include "ega/matrix.hpp"

namespace ega::detail {

Matrix transpose(const Matrix& a);

/// a (n x k) times b (k x m), OpenMP-parallel over row blocks of a.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Transpose of a (k x n) times b (k x m), without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Same product as matmul, single-threaded and unblocked.
Matrix matmul_serial(const Matrix& a, const Matrix& b);

/// G_q[i] = (1/tau) sum_j W(i,j) (t_j - t_i),  G_t[j] = (1/tau) sum_i W(i,j) q_i.
/// Shared by the baseline (W = P - I) and amplified (W = Pbar - I) paths, so
/// identical weights give bit-identical gradients. Defined in contrastive.cpp.
GradientBatch weighted_gradients(const Matrix& w, const EmbeddingBatch& queries,
                                 const EmbeddingBatch& targets, double tau);

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

}  // namespace ega::detail
