#include "ega/gradcache.hpp"

#include <algorithm>
#include <cmath>

#include "ega/error.hpp"

namespace ega {

ChunkPlan ChunkPlan::make(std::size_t batch, std::size_t chunk) {
  require(batch >= 1, ErrorCode::invalid_config, "batch must be non-empty");
  require(chunk >= 1 && chunk <= batch, ErrorCode::invalid_config,
          "chunk size must lie in [1, batch]");
  ChunkPlan plan{batch, chunk, {}};
  for (std::size_t begin = 0; begin < batch; begin += chunk) {
    plan.ranges.emplace_back(begin, std::min(begin + chunk, batch));
  }
  return plan;
}

namespace {

void check_plan(const ChunkPlan& plan, std::size_t rows) {
  require(plan.batch == rows && !plan.ranges.empty() && plan.ranges.back().second == rows,
          ErrorCode::rejected_input, "chunk plan does not cover the batch");
}

}  // namespace

EmbeddingBatch embed_in_chunks(const EncoderParams& params, const Matrix& inputs,
                               const ChunkPlan& plan, std::size_t* zero_norm_rows) {
  check_plan(plan, inputs.rows());
  Matrix out(inputs.rows(), params.output_width());
  std::size_t flagged = 0;
  const auto chunks = static_cast<std::ptrdiff_t>(plan.ranges.size());
#pragma omp parallel for schedule(static) reduction(+ : flagged)
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const auto [begin, end] = plan.ranges[static_cast<std::size_t>(c)];
    std::size_t chunk_flags = 0;
    const EmbeddingBatch part = embed(params, inputs.slice_rows(begin, end), &chunk_flags);
    flagged += chunk_flags;
    for (std::size_t i = begin; i < end; ++i) {
      const auto src = part.row(i - begin);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
  }
  if (zero_norm_rows != nullptr) *zero_norm_rows += flagged;
  return EmbeddingBatch::unchecked(std::move(out));
}

CachedBackward cached_backward(const EncoderParams& params, const Matrix& inputs,
                               const Matrix& grad_embeddings, const ChunkPlan& plan) {
  check_plan(plan, inputs.rows());
  require(grad_embeddings.rows() == inputs.rows(), ErrorCode::rejected_input,
          "embedding gradient does not match the batch");
  CachedBackward out{ParamGrads::zeros_like(params), 0, false};
  for (const auto& [begin, end] : plan.ranges) {
    const Matrix slice = grad_embeddings.slice_rows(begin, end);
    if (!slice.all_finite()) {
      out.aborted = true;
      out.grads = ParamGrads::zeros_like(params);
      return out;
    }
    const ForwardResult fwd = forward(params, inputs.slice_rows(begin, end));
    out.peak_cache_doubles = std::max(out.peak_cache_doubles, fwd.cache.footprint());
    out.grads += backward(params, fwd.cache, slice);
  }
  return out;
}

const char* to_string(LossMode mode) { return mode == LossMode::ega ? "ega" : "baseline"; }

LossMode parse_loss_mode(const std::string& text) {
  if (text == "ega") return LossMode::ega;
  if (text == "baseline") return LossMode::baseline;
  throw Error(ErrorCode::invalid_config, "unknown mode '" + text + "'");
}

PipelineResult embedding_gradients(const EmbeddingBatch& queries,
                                   const EmbeddingBatch& targets,
                                   const StepConfig& config) {
  return config.mode == LossMode::ega ? ega_pipeline(queries, targets, config.ega)
                                      : baseline_pipeline(queries, targets, config.ega.tau);
}

StepDiagnostics train_step(EncoderParams& params, const Matrix& query_inputs,
                           const Matrix& target_inputs, const StepConfig& config) {
  require(query_inputs.rows() == target_inputs.rows(), ErrorCode::rejected_input,
          "query and target batches differ in size");
  const ChunkPlan plan = ChunkPlan::make(query_inputs.rows(), config.chunk);
  StepDiagnostics diag;

  const EmbeddingBatch queries =
      embed_in_chunks(params, query_inputs, plan, &diag.zero_norm_rows);
  const EmbeddingBatch targets =
      embed_in_chunks(params, target_inputs, plan, &diag.zero_norm_rows);

  const PipelineResult result = embedding_gradients(queries, targets, config);
  const std::size_t b = queries.size();
  diag.mean_loss = result.loss.mean;
  diag.loss_underflow_rows = result.loss.underflow_rows;
  diag.amplify_fallback_rows = result.amplified.fallback_rows;
  for (std::size_t i = 0; i < b; ++i) {
    diag.mean_positive_prob += result.probs.values(i, i);
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) diag.max_negative_prob = std::max(diag.max_negative_prob, result.amplified.values(i, j));
    }
  }
  diag.mean_positive_prob /= static_cast<double>(b);
  diag.query_grad_norm = norm2(result.grads.queries.values());
  diag.target_grad_norm = norm2(result.grads.targets.values());

  CachedBackward query_side = cached_backward(params, query_inputs, result.grads.queries, plan);
  CachedBackward target_side = cached_backward(params, target_inputs, result.grads.targets, plan);
  diag.peak_cache_doubles = std::max(query_side.peak_cache_doubles, target_side.peak_cache_doubles);
  if (query_side.aborted || target_side.aborted) {
    diag.skipped = true;
    return diag;
  }
  ParamGrads total = std::move(query_side.grads);
  total += target_side.grads;
  diag.param_grad_norm = total.norm();
  diag.skipped = !adam_step(params, total, config.lr);
  return diag;
}

}  // namespace ega
