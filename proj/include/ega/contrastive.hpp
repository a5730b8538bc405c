#pragma once

#include <cstddef>
#include <vector>

#include "ega/matrix.hpp"

namespace ega {

/// B unit-norm rows of dimension d. Construction validates the invariants
/// (B >= 1, d >= 2, finite entries, row norms 1 within 1e-6).
class EmbeddingBatch {
 public:
  static constexpr double kNormTolerance = 1e-6;

  EmbeddingBatch() = default;
  explicit EmbeddingBatch(Matrix rows);

  /// Skips the unit-norm check; used for encoder outputs whose norm
  /// denominator had to be regularized (the caller carries the flag).
  static EmbeddingBatch unchecked(Matrix rows);

  std::size_t size() const noexcept { return rows_.rows(); }
  std::size_t dim() const noexcept { return rows_.cols(); }
  const Matrix& matrix() const noexcept { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }

 private:
  Matrix rows_;
};

struct SimilarityMatrix {
  Matrix values;  // values(i, j) = <q_i, t_j>
  double tau = 0.02;
};

/// Row-stochastic; diagonal holds p+ of each query, off-diagonal p-.
struct ProbabilityMatrix {
  Matrix values;
};

struct GradientBatch {
  Matrix queries;
  Matrix targets;
};

struct LossResult {
  std::vector<double> per_query;
  double mean = 0.0;
  std::size_t underflow_rows = 0;  // rows whose p+ was clamped
};

SimilarityMatrix similarity_matrix(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets, double tau);

ProbabilityMatrix softmax_probs(const SimilarityMatrix& similarity);

/// loss_i = -log P(i, i).
LossResult infonce_loss(const ProbabilityMatrix& probs);

/// Closed-form info-NCE gradients of the summed batch loss:
///   G_q[i] = (1/tau) * sum_{j != i} P(i,j) (t_j - t_i)
///   G_t[j] = (1/tau) * [(P(j,j) - 1) q_j + sum_{i != j} P(i,j) q_i]
GradientBatch infonce_grads(const ProbabilityMatrix& probs,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau);

void check_tau(double tau);

}  // namespace ega
