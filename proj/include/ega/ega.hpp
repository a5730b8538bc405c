#pragma once

#include <cstddef>
#include <string>

#include "ega/contrastive.hpp"

namespace ega {

enum class HardnessMode {
  relative,  // exp(alpha * (s_ij - s_ii))
  absolute,  // exp(alpha * s_ij)
};

const char* to_string(HardnessMode mode);
HardnessMode parse_hardness_mode(const std::string& text);

inline constexpr double kDefaultTau = 0.02;
inline constexpr double kDefaultAlpha = 20.0;
inline constexpr double kExponentClamp = 60.0;

/// Off-diagonal entries score target j as a negative of query i; the
/// diagonal is fixed at 1.
struct HardnessMatrix {
  Matrix values;
  double alpha = kDefaultAlpha;
  HardnessMode mode = HardnessMode::relative;
};

/// Diagonal copied from P; off-diagonal mass per row equals that of P.
struct AmplifiedProbabilityMatrix {
  Matrix values;
  std::size_t fallback_rows = 0;  // rows left unamplified after underflow
};

/// W = Pbar - I.
struct WeightingMatrix {
  Matrix values;
};

HardnessMatrix hardness_matrix(const SimilarityMatrix& similarity, double alpha,
                               HardnessMode mode);

AmplifiedProbabilityMatrix amplify_probs(const ProbabilityMatrix& probs,
                                         const HardnessMatrix& hardness);

WeightingMatrix weighting_matrix(const AmplifiedProbabilityMatrix& amplified);

/// G_q[i] = (1/tau) sum_j W(i,j) (t_j - t_i),  G_t[j] = (1/tau) sum_i W(i,j) q_i.
/// The difference tensor is never materialized; see reference::ega_gradients
/// for the literal form.
GradientBatch ega_gradients(const WeightingMatrix& weights,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau);

struct EgaConfig {
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  HardnessMode mode = HardnessMode::relative;
};

struct PipelineResult {
  LossResult loss;  // always the plain info-NCE loss
  GradientBatch grads;
  ProbabilityMatrix probs;
  AmplifiedProbabilityMatrix amplified;
};

/// Similarities, plain loss, and amplified gradients in one call.
PipelineResult ega_pipeline(const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets,
                            const EgaConfig& config);

/// Same outputs with unamplified gradients; `amplified` mirrors `probs`.
PipelineResult baseline_pipeline(const EmbeddingBatch& queries,
                                 const EmbeddingBatch& targets, double tau);

}  // namespace ega
