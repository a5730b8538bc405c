#include "ega/contrastive.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <string>

#include "ega/error.hpp"
#include "linalg.hpp"

namespace ega {

EmbeddingBatch::EmbeddingBatch(Matrix rows) : rows_(std::move(rows)) {
  require(rows_.rows() >= 1, ErrorCode::rejected_input, "embedding batch is empty");
  require(rows_.cols() >= 2, ErrorCode::rejected_input,
          "embedding dimension must be at least 2");
  require(rows_.all_finite(), ErrorCode::rejected_input,
          "embedding batch has non-finite entries");
  for (std::size_t i = 0; i < rows_.rows(); ++i) {
    const double n = norm2(rows_.row(i));
    require(std::abs(n - 1.0) <= kNormTolerance, ErrorCode::rejected_input,
            "embedding row " + std::to_string(i) + " is not unit-norm");
  }
}

EmbeddingBatch EmbeddingBatch::unchecked(Matrix rows) {
  EmbeddingBatch out;
  out.rows_ = std::move(rows);
  return out;
}

void check_tau(double tau) {
  require(std::isfinite(tau) && tau > 0.0, ErrorCode::invalid_config,
          "temperature must be positive");
}

namespace {

void check_pair(const EmbeddingBatch& queries, const EmbeddingBatch& targets) {
  require(queries.size() == targets.size(), ErrorCode::rejected_input,
          "query and target batch sizes differ");
  require(queries.dim() == targets.dim(), ErrorCode::rejected_input,
          "query and target dimensions differ");
}

}  // namespace

SimilarityMatrix similarity_matrix(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets, double tau) {
  check_pair(queries, targets);
  check_tau(tau);
  return {detail::matmul(queries.matrix(), detail::transpose(targets.matrix())), tau};
}

ProbabilityMatrix softmax_probs(const SimilarityMatrix& similarity) {
  check_tau(similarity.tau);
  const Matrix& s = similarity.values;
  require(s.all_finite(), ErrorCode::rejected_input, "similarities are not finite");
  require(s.rows() == s.cols(), ErrorCode::rejected_input,
          "similarity matrix must be square");
  const std::size_t b = s.rows();
  const double inv_tau = 1.0 / similarity.tau;
  Matrix p(b, b);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(b); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto srow = s.row(i);
    auto prow = p.row(i);
    const double peak = *std::max_element(srow.begin(), srow.end()) * inv_tau;
    double total = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      prow[j] = std::exp(srow[j] * inv_tau - peak);
      total += prow[j];
    }
    const double inv_total = 1.0 / total;
    for (std::size_t j = 0; j < b; ++j) prow[j] *= inv_total;
  }
  return {std::move(p)};
}

LossResult infonce_loss(const ProbabilityMatrix& probs) {
  const Matrix& p = probs.values;
  require(p.rows() == p.cols() && p.rows() >= 1, ErrorCode::rejected_input,
          "probability matrix must be square and non-empty");
  LossResult out;
  out.per_query.resize(p.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double positive = p(i, i);
    if (!(positive >= DBL_MIN)) {
      positive = DBL_MIN;
      ++out.underflow_rows;
    }
    out.per_query[i] = -std::log(positive);
    total += out.per_query[i];
  }
  out.mean = total / static_cast<double>(p.rows());
  return out;
}

namespace detail {

GradientBatch weighted_gradients(const Matrix& w, const EmbeddingBatch& queries,
                                 const EmbeddingBatch& targets, double tau) {
  check_pair(queries, targets);
  check_tau(tau);
  const std::size_t b = queries.size();
  const std::size_t d = queries.dim();
  require(w.rows() == b && w.cols() == b, ErrorCode::rejected_input,
          "weighting matrix does not match batch");
  const double inv_tau = 1.0 / tau;
  const Matrix& t = targets.matrix();

  // sum_j W(i,j) (t_j - t_i) = (W T)_i - (sum_j W(i,j)) t_i
  Matrix gq = matmul(w, t);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(b); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) row_sum += w(i, j);
    auto dst = gq.row(i);
    const auto ti = t.row(i);
    for (std::size_t k = 0; k < d; ++k) dst[k] = (dst[k] - row_sum * ti[k]) * inv_tau;
  }

  Matrix gt = matmul_tn(w, queries.matrix());
  for (double& v : gt.values()) v *= inv_tau;
  return {std::move(gq), std::move(gt)};
}

}  // namespace detail

GradientBatch infonce_grads(const ProbabilityMatrix& probs,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau) {
  Matrix w = probs.values;
  require(w.rows() == w.cols(), ErrorCode::rejected_input,
          "probability matrix must be square");
  for (std::size_t i = 0; i < w.rows(); ++i) w(i, i) -= 1.0;
  return detail::weighted_gradients(w, queries, targets, tau);
}

}  // namespace ega
