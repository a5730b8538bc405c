#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "ega/error.hpp"
#include "ega/gradcache.hpp"
#include "support.hpp"

namespace ega {
namespace {

using testing::random_matrix;

const std::vector<std::size_t> kWidths{6, 12, 5};

double max_coordinate_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  return worst;
}

std::vector<double> flat_params(const EncoderParams& p) {
  std::vector<double> out;
  for (const auto& layer : p.layers) {
    out.insert(out.end(), layer.weights.values().begin(), layer.weights.values().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

// One step with no chunking or caching: full forward, full backward, Adam.
EncoderParams monolithic_baseline_step(EncoderParams params, const Matrix& qin,
                                       const Matrix& tin, double tau, double lr) {
  const ForwardResult q = forward(params, qin);
  const ForwardResult t = forward(params, tin);
  const auto probs = softmax_probs(similarity_matrix(q.embeddings, t.embeddings, tau));
  const auto g = infonce_grads(probs, q.embeddings, t.embeddings, tau);
  ParamGrads total = backward(params, q.cache, g.queries);
  total += backward(params, t.cache, g.targets);
  adam_step(params, total, lr);
  return params;
}

TEST(ChunkPlan, CoversBatchInOrder) {
  const ChunkPlan plan = ChunkPlan::make(7, 3);
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{0, 3}, {3, 6}, {6, 7}};
  EXPECT_EQ(plan.ranges, expected);
  EXPECT_EQ(ChunkPlan::make(4, 4).ranges.size(), 1u);
  EXPECT_EQ(ChunkPlan::make(4, 1).ranges.size(), 4u);
}

TEST(ChunkPlan, RejectsBadSizes) {
  EXPECT_THROW(ChunkPlan::make(0, 1), Error);
  EXPECT_THROW(ChunkPlan::make(4, 0), Error);
  EXPECT_THROW(ChunkPlan::make(4, 5), Error);
}

TEST(EmbedInChunks, BitwiseEqualToDirectForward) {
  const EncoderParams p = init_encoder(kWidths, 1);
  const Matrix x = random_matrix(13, 6, 2);
  const Matrix direct = embed(p, x).matrix();
  for (std::size_t c : {1, 3, 5, 13}) {
    const Matrix chunked = embed_in_chunks(p, x, ChunkPlan::make(13, c)).matrix();
    EXPECT_EQ(std::memcmp(chunked.data(), direct.data(), 13 * 5 * sizeof(double)), 0) << c;
  }
}

TEST(CachedBackward, SingleChunkMatchesDirectBackward) {
  const EncoderParams p = init_encoder(kWidths, 3);
  const Matrix x = random_matrix(8, 6, 4);
  const Matrix g = random_matrix(8, 5, 5);
  const ForwardResult f = forward(p, x);
  const auto direct = backward(p, f.cache, g).flatten();
  const auto cached = cached_backward(p, x, g, ChunkPlan::make(8, 8));
  EXPECT_FALSE(cached.aborted);
  EXPECT_LE(max_coordinate_diff(cached.grads.flatten(), direct), 1e-12);
}

TEST(CachedBackward, ChunkSizesAgree) {
  const EncoderParams p = init_encoder(kWidths, 6);
  const Matrix x = random_matrix(8, 6, 7);
  const Matrix g = random_matrix(8, 5, 8);
  const ForwardResult f = forward(p, x);
  const auto direct = backward(p, f.cache, g).flatten();
  for (std::size_t c : {1, 2, 8}) {
    const auto grads = cached_backward(p, x, g, ChunkPlan::make(8, c)).grads.flatten();
    EXPECT_LE(max_coordinate_diff(grads, direct), 1e-10) << c;
  }
}

TEST(CachedBackward, ZeroUpstreamIsZeroForEveryPlan) {
  const EncoderParams p = init_encoder(kWidths, 6);
  const Matrix x = random_matrix(6, 6, 7);
  for (std::size_t c : {1, 4, 6}) {
    for (double v : cached_backward(p, x, Matrix(6, 5), ChunkPlan::make(6, c)).grads.flatten()) {
      EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(CachedBackward, PeakCacheScalesWithChunkNotBatch) {
  const EncoderParams p = init_encoder(kWidths, 6);
  const std::size_t per_row = 6 + 12 + 5 + 1;  // inputs, pre-activations, norm
  for (std::size_t b : {8, 64}) {
    const Matrix x = random_matrix(b, 6, b);
    const Matrix g = random_matrix(b, 5, b + 1);
    EXPECT_EQ(cached_backward(p, x, g, ChunkPlan::make(b, 4)).peak_cache_doubles, 4 * per_row);
    EXPECT_EQ(cached_backward(p, x, g, ChunkPlan::make(b, b)).peak_cache_doubles, b * per_row);
  }
}

TEST(CachedBackward, NonFiniteUpstreamAborts) {
  const EncoderParams p = init_encoder(kWidths, 6);
  const Matrix x = random_matrix(4, 6, 7);
  Matrix g = random_matrix(4, 5, 8);
  g(3, 1) = NAN;
  const auto out = cached_backward(p, x, g, ChunkPlan::make(4, 2));
  EXPECT_TRUE(out.aborted);
  for (double v : out.grads.flatten()) EXPECT_EQ(v, 0.0);
}

TEST(TrainStep, ChunkSizeDoesNotChangeTheStep) {
  const EncoderParams start = init_encoder(kWidths, 9);
  const Matrix qin = random_matrix(16, 6, 10);
  const Matrix tin = random_matrix(16, 6, 11);
  for (auto mode : {LossMode::baseline, LossMode::ega}) {
    std::vector<std::vector<double>> params;
    std::vector<double> losses;
    for (std::size_t c : {1, 4, 16}) {
      EncoderParams p = start;
      StepConfig config;
      config.mode = mode;
      config.chunk = c;
      config.lr = 1e-2;
      const StepDiagnostics d = train_step(p, qin, tin, config);
      EXPECT_FALSE(d.skipped);
      params.push_back(flat_params(p));
      losses.push_back(d.mean_loss);
    }
    for (std::size_t k = 1; k < params.size(); ++k) {
      EXPECT_LE(max_coordinate_diff(params[k], params[0]), 1e-9);
      EXPECT_EQ(std::memcmp(&losses[k], &losses[0], sizeof(double)), 0);
    }
  }
}

TEST(TrainStep, ZeroAlphaSingleChunkEqualsMonolithicStep) {
  EncoderParams p = init_encoder(kWidths, 12);
  const Matrix qin = random_matrix(8, 6, 13);
  const Matrix tin = random_matrix(8, 6, 14);
  const EncoderParams expected = monolithic_baseline_step(p, qin, tin, 0.05, 1e-2);
  StepConfig config;
  config.mode = LossMode::ega;
  config.ega = {0.05, 0.0, HardnessMode::relative};
  config.chunk = 8;
  config.lr = 1e-2;
  train_step(p, qin, tin, config);
  EXPECT_LE(max_coordinate_diff(flat_params(p), flat_params(expected)), 1e-12);
}

TEST(TrainStep, DeterministicTrajectory) {
  const Matrix qin = random_matrix(8, 6, 13);
  const Matrix tin = random_matrix(8, 6, 14);
  auto run = [&] {
    EncoderParams p = init_encoder(kWidths, 15);
    StepConfig config;
    config.chunk = 3;
    for (int step = 0; step < 5; ++step) train_step(p, qin, tin, config);
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainStep, ReportsDiagnostics) {
  EncoderParams p = init_encoder(kWidths, 16);
  StepConfig config;
  config.chunk = 2;
  const StepDiagnostics d =
      train_step(p, random_matrix(6, 6, 1), random_matrix(6, 6, 2), config);
  EXPECT_GT(d.mean_loss, 0.0);
  EXPECT_GT(d.mean_positive_prob, 0.0);
  EXPECT_LE(d.mean_positive_prob, 1.0);
  EXPECT_GT(d.param_grad_norm, 0.0);
  EXPECT_EQ(d.peak_cache_doubles, 2u * (6 + 12 + 5 + 1));
  EXPECT_EQ(p.adam.step, 1u);
}

TEST(LossMode, ParsesNames) {
  EXPECT_EQ(parse_loss_mode("ega"), LossMode::ega);
  EXPECT_EQ(parse_loss_mode("baseline"), LossMode::baseline);
  EXPECT_THROW(parse_loss_mode("triplet"), Error);
}

}  // namespace
}  // namespace ega
