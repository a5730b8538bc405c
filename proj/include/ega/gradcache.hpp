#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ega/contrastive.hpp"
#include "ega/ega.hpp"
#include "ega/encoder.hpp"

namespace ega {

/// Contiguous, ordered ranges [begin, end) of size `chunk` covering a batch.
struct ChunkPlan {
  std::size_t batch = 0;
  std::size_t chunk = 0;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;

  static ChunkPlan make(std::size_t batch, std::size_t chunk);
};

/// Chunk-by-chunk forward with no retained activations. Chunks may run on
/// different threads; rows are independent so the result equals one
/// full-batch forward bit for bit.
EmbeddingBatch embed_in_chunks(const EncoderParams& params, const Matrix& inputs,
                               const ChunkPlan& plan,
                               std::size_t* zero_norm_rows = nullptr);

struct CachedBackward {
  ParamGrads grads;
  std::size_t peak_cache_doubles = 0;  // largest ActivationCache held at once
  bool aborted = false;                // grad_embeddings had a non-finite entry
};

/// Re-runs each chunk with a cache, backpropagates its slice of the
/// full-batch embedding gradient and accumulates in plan order.
CachedBackward cached_backward(const EncoderParams& params, const Matrix& inputs,
                               const Matrix& grad_embeddings, const ChunkPlan& plan);

enum class LossMode { baseline, ega };

const char* to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

struct StepConfig {
  LossMode mode = LossMode::ega;
  EgaConfig ega;
  std::size_t chunk = 8;
  double lr = 1e-3;
};

struct StepDiagnostics {
  double mean_loss = 0.0;
  double mean_positive_prob = 0.0;
  double max_negative_prob = 0.0;  // largest off-diagonal entry of Pbar
  double query_grad_norm = 0.0;
  double target_grad_norm = 0.0;
  double param_grad_norm = 0.0;
  std::size_t peak_cache_doubles = 0;
  std::size_t zero_norm_rows = 0;
  std::size_t loss_underflow_rows = 0;
  std::size_t amplify_fallback_rows = 0;
  bool skipped = false;  // a non-finite gradient blocked the optimizer step
};

/// Loss gradients w.r.t. full-batch embeddings for the configured mode.
PipelineResult embedding_gradients(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets,
                                   const StepConfig& config);

/// Embed both towers in chunks, compute full-batch gradients, backprop each
/// tower through the cache, sum the shared-parameter gradients, Adam step.
StepDiagnostics train_step(EncoderParams& params, const Matrix& query_inputs,
                           const Matrix& target_inputs, const StepConfig& config);

}  // namespace ega
