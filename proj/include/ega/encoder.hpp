#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ega/contrastive.hpp"
#include "ega/matrix.hpp"

namespace ega {

enum class EncoderKind : std::uint16_t {
  mlp = 0,    // GELU hidden layers, linear output, L2 normalization
  table = 1,  // trainable lookup rows; input column 0 holds the row id
};

struct Layer {
  Matrix weights;             // fan_in x fan_out
  std::vector<double> bias;   // fan_out entries; empty for table encoders

  bool operator==(const Layer&) const = default;
};

struct AdamState {
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Shared parameters of the query and target towers.
struct EncoderParams {
  EncoderKind kind = EncoderKind::mlp;
  std::vector<std::size_t> widths;  // mlp: input, hidden..., d; table: rows, d
  std::vector<Layer> layers;
  AdamState adam;

  std::size_t input_width() const;
  std::size_t output_width() const { return widths.back(); }
  bool operator==(const EncoderParams&) const = default;
};

struct ParamGrads {
  std::vector<Layer> layers;

  static ParamGrads zeros_like(const EncoderParams& params);
  ParamGrads& operator+=(const ParamGrads& other);
  ParamGrads& operator*=(double factor);
  bool all_finite() const;
  double norm() const;
  /// Every parameter entry in layer order (weights then bias).
  std::vector<double> flatten() const;
};

/// Everything backward needs from one forward batch.
struct ActivationCache {
  Matrix inputs;
  std::vector<Matrix> pre_activations;  // one per layer; the last is z
  std::vector<double> norm_denominators;

  std::size_t rows() const { return inputs.rows(); }
  /// Number of doubles held.
  std::size_t footprint() const;
};

struct ForwardResult {
  EmbeddingBatch embeddings;
  ActivationCache cache;
  std::size_t zero_norm_rows = 0;
};

inline constexpr double kNormEpsilon = 1e-12;

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the xorshift stream.
EncoderParams init_encoder(std::span<const std::size_t> widths, std::uint64_t seed);
/// Lookup table of `rows` embeddings of width `dim`, uniform in [-1, 1].
EncoderParams init_table(std::size_t rows, std::size_t dim, std::uint64_t seed);

ForwardResult forward(const EncoderParams& params, const Matrix& inputs);

/// Forward without retaining activations.
EmbeddingBatch embed(const EncoderParams& params, const Matrix& inputs,
                     std::size_t* zero_norm_rows = nullptr);

/// Vector-Jacobian product of z -> z / |z|:
/// (g - <zhat, g> zhat) / |z|, with |z| + 1e-12 used for |z| < 1e-12.
std::vector<double> normalize_backward(std::span<const double> z,
                                       std::span<const double> upstream);

/// Reverse-mode gradients for `grad_embeddings` = dLoss/d(normalized outputs).
ParamGrads backward(const EncoderParams& params, const ActivationCache& cache,
                    const Matrix& grad_embeddings);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update. Returns false (and leaves params untouched)
/// if any gradient entry is non-finite.
bool adam_step(EncoderParams& params, const ParamGrads& grads, double lr,
               const AdamConfig& config = {});

void write_checkpoint(const std::string& path, const EncoderParams& params);
EncoderParams read_checkpoint(const std::string& path);

}  // namespace ega
