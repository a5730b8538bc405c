#include "ega/reference.hpp"

#include <algorithm>
#include <cmath>

#include "ega/error.hpp"

namespace ega::reference {

SimilarityMatrix similarity_matrix(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets, double tau) {
  check_tau(tau);
  require(queries.size() == targets.size() && queries.dim() == targets.dim(),
          ErrorCode::rejected_input, "query and target batches differ in shape");
  const std::size_t b = queries.size();
  Matrix s(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) s(i, j) = dot(queries.row(i), targets.row(j));
  }
  return {std::move(s), tau};
}

ProbabilityMatrix softmax_probs(const SimilarityMatrix& similarity) {
  check_tau(similarity.tau);
  const Matrix& s = similarity.values;
  const std::size_t b = s.rows();
  Matrix p(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    double peak = s(i, 0);
    for (std::size_t j = 1; j < b; ++j) peak = std::max(peak, s(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      p(i, j) = std::exp((s(i, j) - peak) / similarity.tau);
      total += p(i, j);
    }
    for (std::size_t j = 0; j < b; ++j) p(i, j) /= total;
  }
  return {std::move(p)};
}

GradientBatch infonce_grads(const ProbabilityMatrix& probs,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau) {
  WeightingMatrix w{probs.values};
  for (std::size_t i = 0; i < w.values.rows(); ++i) w.values(i, i) -= 1.0;
  return reference::ega_gradients(w, queries, targets, tau);
}

HardnessMatrix hardness_matrix(const SimilarityMatrix& similarity, double alpha,
                               HardnessMode mode) {
  require(std::isfinite(alpha) && alpha >= 0.0, ErrorCode::invalid_config,
          "alpha must be a non-negative finite number");
  const Matrix& s = similarity.values;
  const std::size_t b = s.rows();
  Matrix h(b, b, 1.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const double gap = mode == HardnessMode::relative ? s(i, j) - s(i, i) : s(i, j);
      h(i, j) = std::exp(std::clamp(alpha * gap, -kExponentClamp, kExponentClamp));
    }
  }
  return {std::move(h), alpha, mode};
}

AmplifiedProbabilityMatrix amplify_probs(const ProbabilityMatrix& probs,
                                         const HardnessMatrix& hardness) {
  const Matrix& p = probs.values;
  const Matrix& h = hardness.values;
  const std::size_t b = p.rows();
  AmplifiedProbabilityMatrix out{p, 0};
  for (std::size_t i = 0; i < b; ++i) {
    double mass = 0.0;
    double amplified_mass = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      mass += p(i, j);
      amplified_mass += p(i, j) * h(i, j);
    }
    if (!(amplified_mass > 0.0 && std::isfinite(amplified_mass))) {
      if (b > 1) ++out.fallback_rows;
      continue;
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) out.values(i, j) = p(i, j) * h(i, j) / amplified_mass * mass;
    }
  }
  return out;
}

GradientBatch ega_gradients(const WeightingMatrix& weights,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau) {
  check_tau(tau);
  const Matrix& w = weights.values;
  const std::size_t b = queries.size();
  const std::size_t d = queries.dim();
  require(w.rows() == b && w.cols() == b && targets.size() == b && targets.dim() == d,
          ErrorCode::rejected_input, "weighting matrix does not match batch");
  GradientBatch g{Matrix(b, d), Matrix(b, d)};
  Matrix diff(b, d);  // one row of the difference tensor: D(i, j) = t_j - t_i
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t k = 0; k < d; ++k) diff(j, k) = targets.row(j)[k] - targets.row(i)[k];
    }
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t k = 0; k < d; ++k) g.queries(i, k) += w(i, j) * diff(j, k) / tau;
    }
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < d; ++k) g.targets(j, k) += w(i, j) * queries.row(i)[k] / tau;
    }
  }
  return g;
}

PipelineResult ega_pipeline(const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets,
                            const EgaConfig& config) {
  const SimilarityMatrix s = reference::similarity_matrix(queries, targets, config.tau);
  PipelineResult out;
  out.probs = reference::softmax_probs(s);
  out.loss = infonce_loss(out.probs);
  out.amplified =
      reference::amplify_probs(out.probs, reference::hardness_matrix(s, config.alpha, config.mode));
  WeightingMatrix w{out.amplified.values};
  for (std::size_t i = 0; i < w.values.rows(); ++i) w.values(i, i) -= 1.0;
  out.grads = reference::ega_gradients(w, queries, targets, config.tau);
  return out;
}

}  // namespace ega::reference
