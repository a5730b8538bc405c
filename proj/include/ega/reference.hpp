#pragma once

// Serial, loop-for-loop implementations of the contrastive and EGA kernels.
// They follow the batched formulas literally (including the per-row
// difference tensor D(i, j) = t_j - t_i) and exist to cross-check and
// benchmark the OpenMP kernels in ega.hpp / contrastive.hpp.

#include "ega/contrastive.hpp"
#include "ega/ega.hpp"

namespace ega::reference {

SimilarityMatrix similarity_matrix(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets, double tau);
ProbabilityMatrix softmax_probs(const SimilarityMatrix& similarity);
GradientBatch infonce_grads(const ProbabilityMatrix& probs,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau);
HardnessMatrix hardness_matrix(const SimilarityMatrix& similarity, double alpha,
                               HardnessMode mode);
AmplifiedProbabilityMatrix amplify_probs(const ProbabilityMatrix& probs,
                                         const HardnessMatrix& hardness);
GradientBatch ega_gradients(const WeightingMatrix& weights,
                            const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets, double tau);
PipelineResult ega_pipeline(const EmbeddingBatch& queries,
                            const EmbeddingBatch& targets,
                            const EgaConfig& config);

}  // namespace ega::reference
