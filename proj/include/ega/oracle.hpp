#pragma once

// Brute-force references that share no code with the kernels: extended
// precision per-query loops, central finite differences, full sorts. Used
// by the gradcheck harness and the test suites.

#include <cstddef>
#include <functional>
#include <vector>

#include "ega/contrastive.hpp"
#include "ega/ega.hpp"
#include "ega/matrix.hpp"

namespace ega::oracle {

/// Plain triple loop.
Matrix naive_similarity(const Matrix& queries, const Matrix& targets);

/// Softmax of logits / tau in long double.
std::vector<long double> softmax(std::span<const double> similarities, double tau);

/// Sum over queries of -log p+; embeddings need not be unit-norm.
long double summed_loss(const Matrix& queries, const Matrix& targets, double tau);

/// Per-query evaluation of the gradients with p- optionally replaced by the
/// hardness-reweighted, mass-preserving probabilities. Each query i
/// contributes G^+ to target i and G^-_j to every other target j.
GradientBatch per_query_gradients(const Matrix& queries, const Matrix& targets,
                                  double tau, double alpha, HardnessMode mode,
                                  bool amplify);

/// Central differences of summed_loss with respect to every embedding entry.
GradientBatch finite_difference_gradients(const Matrix& queries,
                                          const Matrix& targets, double tau,
                                          double step);

/// Central differences of v -> scalar(v) at every coordinate of x.
std::vector<double> finite_difference(
    const std::function<long double(std::span<const double>)>& scalar,
    std::span<const double> x, double step);

/// Vector-Jacobian product of z -> z/|z| by central differences.
std::vector<double> normalize_vjp_fd(std::span<const double> z,
                                     std::span<const double> upstream, double step);

/// max |a - b| / max(max |b|, floor): error relative to the reference scale.
double relative_error(std::span<const double> actual,
                      std::span<const double> expected, double floor = 1e-300);
double relative_error(const Matrix& actual, const Matrix& expected,
                      double floor = 1e-300);

struct RankingStats {
  double precision_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double mean_rank = 0.0;
};

/// Full stable sort of each query's targets (descending similarity, lower
/// index first on ties); the positive of query i is target i.
RankingStats sorted_ranking(const Matrix& queries, const Matrix& targets);

}  // namespace ega::oracle
