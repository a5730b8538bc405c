#include "ega/ega.hpp"

#include <algorithm>
#include <cmath>

#include "ega/error.hpp"
#include "linalg.hpp"

namespace ega {

const char* to_string(HardnessMode mode) {
  return mode == HardnessMode::relative ? "relative" : "absolute";
}

HardnessMode parse_hardness_mode(const std::string& text) {
  if (text == "relative") return HardnessMode::relative;
  if (text == "absolute") return HardnessMode::absolute;
  throw Error(ErrorCode::invalid_config, "unknown hardness mode '" + text + "'");
}

namespace {

void check_alpha(double alpha) {
  require(std::isfinite(alpha) && alpha >= 0.0, ErrorCode::invalid_config,
          "alpha must be a non-negative finite number");
}

double clamped_exp(double exponent) {
  return std::exp(std::clamp(exponent, -kExponentClamp, kExponentClamp));
}

}  // namespace

HardnessMatrix hardness_matrix(const SimilarityMatrix& similarity, double alpha,
                               HardnessMode mode) {
  check_alpha(alpha);
  const Matrix& s = similarity.values;
  require(s.rows() == s.cols(), ErrorCode::rejected_input,
          "similarity matrix must be square");
  require(s.all_finite(), ErrorCode::rejected_input, "similarities are not finite");
  const std::size_t b = s.rows();
  Matrix h(b, b);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(b); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double anchor = mode == HardnessMode::relative ? s(i, i) : 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      h(i, j) = j == i ? 1.0 : clamped_exp(alpha * (s(i, j) - anchor));
    }
  }
  return {std::move(h), alpha, mode};
}

AmplifiedProbabilityMatrix amplify_probs(const ProbabilityMatrix& probs,
                                         const HardnessMatrix& hardness) {
  const Matrix& p = probs.values;
  const Matrix& h = hardness.values;
  require(p.same_shape(h) && p.rows() == p.cols(), ErrorCode::rejected_input,
          "probability and hardness matrices differ in shape");
  const std::size_t b = p.rows();
  AmplifiedProbabilityMatrix out{Matrix(b, b), 0};
  std::size_t fallbacks = 0;
#pragma omp parallel for schedule(static) reduction(+ : fallbacks)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(b); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto dst = out.values.row(i);
    double mass = 0.0;
    double amplified_mass = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      mass += p(i, j);
      dst[j] = p(i, j) * h(i, j);
      amplified_mass += dst[j];
    }
    if (amplified_mass > 0.0 && std::isfinite(amplified_mass)) {
      const double scale = mass / amplified_mass;
      for (std::size_t j = 0; j < b; ++j) dst[j] *= scale;
    } else {
      for (std::size_t j = 0; j < b; ++j) dst[j] = p(i, j);
      if (b > 1) ++fallbacks;
    }
    dst[i] = p(i, i);
  }
  out.fallback_rows = fallbacks;
  return out;
}

WeightingMatrix weighting_matrix(const AmplifiedProbabilityMatrix& amplified) {
  Matrix w = amplified.values;
  require(w.rows() == w.cols(), ErrorCode::rejected_input,
          "amplified probability matrix must be square");
  for (std::size_t i = 0; i < w.rows(); ++i) w(i, i) -= 1.0;
  return {std::move(w)};
}

GradientBatch ega_gradients(const WeightingMatrix& weights,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau) {
  return detail::weighted_gradients(weights.values, queries, targets, tau);
}

PipelineResult ega_pipeline(const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets,
                            const EgaConfig& config) {
  check_alpha(config.alpha);
  const SimilarityMatrix s = similarity_matrix(queries, targets, config.tau);
  PipelineResult out;
  out.probs = softmax_probs(s);
  out.loss = infonce_loss(out.probs);
  out.amplified = amplify_probs(out.probs, hardness_matrix(s, config.alpha, config.mode));
  out.grads = ega_gradients(weighting_matrix(out.amplified), queries, targets, config.tau);
  return out;
}

PipelineResult baseline_pipeline(const EmbeddingBatch& queries,
                                 const EmbeddingBatch& targets, double tau) {
  const SimilarityMatrix s = similarity_matrix(queries, targets, tau);
  PipelineResult out;
  out.probs = softmax_probs(s);
  out.loss = infonce_loss(out.probs);
  out.amplified = {out.probs.values, 0};
  out.grads = infonce_grads(out.probs, queries, targets, tau);
  return out;
}

}  // namespace ega
