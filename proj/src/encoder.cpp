#include "ega/encoder.hpp"

#include <cmath>
#include <numbers>

#include "ega/error.hpp"
#include "ega/rng.hpp"
#include "linalg.hpp"

namespace ega {
namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix apply_gelu(const Matrix& a) {
  Matrix h = a;
  for (double& v : h.values()) v = gelu(v);
  return h;
}

Matrix affine(const Matrix& x, const Layer& layer) {
  Matrix a = detail::matmul(x, layer.weights);
  if (!layer.bias.empty()) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto row = a.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
  }
  return a;
}

Matrix gather_rows(const EncoderParams& params, const Matrix& inputs) {
  const Matrix& table = params.layers.front().weights;
  Matrix z(inputs.rows(), table.cols());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const double id = inputs(i, 0);
    require(id >= 0.0 && id < static_cast<double>(table.rows()) && id == std::floor(id),
            ErrorCode::rejected_input, "table encoder input is not a valid row id");
    const auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), z.row(i).begin());
  }
  return z;
}

void check_inputs(const EncoderParams& params, const Matrix& inputs) {
  require(inputs.cols() == params.input_width(), ErrorCode::rejected_input,
          "input width does not match the encoder");
  require(inputs.all_finite(), ErrorCode::rejected_input, "encoder inputs are not finite");
}

/// Normalizes rows of z in place; returns the denominators used.
std::vector<double> normalize_rows(Matrix& z, std::size_t& zero_norm_rows) {
  std::vector<double> denominators(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    double n = norm2(row);
    if (n < kNormEpsilon) {
      n += kNormEpsilon;
      ++zero_norm_rows;
    }
    denominators[i] = n;
    for (double& v : row) v /= n;
  }
  return denominators;
}

Layer zero_layer_like(const Layer& layer) {
  return {Matrix(layer.weights.rows(), layer.weights.cols()),
          std::vector<double>(layer.bias.size(), 0.0)};
}

template <typename Fn>
void for_each_pair(std::vector<Layer>& a, const std::vector<Layer>& b, Fn fn) {
  for (std::size_t l = 0; l < a.size(); ++l) {
    auto wa = a[l].weights.values();
    auto wb = b[l].weights.values();
    for (std::size_t k = 0; k < wa.size(); ++k) fn(wa[k], wb[k]);
    for (std::size_t k = 0; k < a[l].bias.size(); ++k) fn(a[l].bias[k], b[l].bias[k]);
  }
}

}  // namespace

std::size_t EncoderParams::input_width() const {
  return kind == EncoderKind::table ? 1 : widths.front();
}

ParamGrads ParamGrads::zeros_like(const EncoderParams& params) {
  ParamGrads g;
  for (const auto& layer : params.layers) g.layers.push_back(zero_layer_like(layer));
  return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
  require(layers.size() == other.layers.size(), ErrorCode::rejected_input,
          "gradient layer count mismatch");
  for_each_pair(layers, other.layers, [](double& a, double b) { a += b; });
  return *this;
}

ParamGrads& ParamGrads::operator*=(double factor) {
  for (auto& layer : layers) {
    for (double& v : layer.weights.values()) v *= factor;
    for (double& v : layer.bias) v *= factor;
  }
  return *this;
}

bool ParamGrads::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weights.all_finite()) return false;
    for (double v : layer.bias) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<double> ParamGrads::flatten() const {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weights.values().begin(), layer.weights.values().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

double ParamGrads::norm() const {
  double acc = 0.0;
  for (double v : flatten()) acc += v * v;
  return std::sqrt(acc);
}

std::size_t ActivationCache::footprint() const {
  std::size_t total = inputs.values().size() + norm_denominators.size();
  for (const auto& a : pre_activations) total += a.values().size();
  return total;
}

EncoderParams init_encoder(std::span<const std::size_t> widths, std::uint64_t seed) {
  require(widths.size() >= 2, ErrorCode::invalid_config,
          "encoder needs at least an input and an output width");
  for (std::size_t w : widths) {
    require(w >= 1, ErrorCode::invalid_config, "layer widths must be positive");
  }
  EncoderParams params;
  params.kind = EncoderKind::mlp;
  params.widths.assign(widths.begin(), widths.end());
  Xorshift64Star rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    Layer layer{Matrix(widths[l], widths[l + 1]), std::vector<double>(widths[l + 1])};
    for (double& v : layer.weights.values()) v = rng.uniform(-bound, bound);
    for (double& v : layer.bias) v = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  params.adam.first_moment = ParamGrads::zeros_like(params).layers;
  params.adam.second_moment = params.adam.first_moment;
  return params;
}

EncoderParams init_table(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  require(rows >= 1 && dim >= 1, ErrorCode::invalid_config,
          "table encoder needs at least one row and column");
  EncoderParams params;
  params.kind = EncoderKind::table;
  params.widths = {rows, dim};
  Xorshift64Star rng(seed);
  Layer layer{Matrix(rows, dim), {}};
  for (double& v : layer.weights.values()) v = rng.uniform(-1.0, 1.0);
  params.layers.push_back(std::move(layer));
  params.adam.first_moment = ParamGrads::zeros_like(params).layers;
  params.adam.second_moment = params.adam.first_moment;
  return params;
}

ForwardResult forward(const EncoderParams& params, const Matrix& inputs) {
  check_inputs(params, inputs);
  ForwardResult out;
  out.cache.inputs = inputs;
  Matrix z;
  if (params.kind == EncoderKind::table) {
    z = gather_rows(params, inputs);
    out.cache.pre_activations.push_back(z);
  } else {
    Matrix h = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      Matrix a = affine(h, params.layers[l]);
      if (l + 1 < params.layers.size()) h = apply_gelu(a);
      out.cache.pre_activations.push_back(std::move(a));
    }
    z = out.cache.pre_activations.back();
  }
  out.cache.norm_denominators = normalize_rows(z, out.zero_norm_rows);
  out.embeddings = EmbeddingBatch::unchecked(std::move(z));
  return out;
}

EmbeddingBatch embed(const EncoderParams& params, const Matrix& inputs,
                     std::size_t* zero_norm_rows) {
  check_inputs(params, inputs);
  Matrix z;
  if (params.kind == EncoderKind::table) {
    z = gather_rows(params, inputs);
  } else {
    z = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      z = affine(z, params.layers[l]);
      if (l + 1 < params.layers.size()) z = apply_gelu(z);
    }
  }
  std::size_t flagged = 0;
  normalize_rows(z, flagged);
  if (zero_norm_rows != nullptr) *zero_norm_rows += flagged;
  return EmbeddingBatch::unchecked(std::move(z));
}

std::vector<double> normalize_backward(std::span<const double> z,
                                       std::span<const double> upstream) {
  require(z.size() == upstream.size(), ErrorCode::rejected_input,
          "normalize_backward size mismatch");
  double n = norm2(z);
  if (n < kNormEpsilon) n += kNormEpsilon;
  double radial = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) radial += (z[k] / n) * upstream[k];
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = (upstream[k] - radial * z[k] / n) / n;
  return out;
}

ParamGrads backward(const EncoderParams& params, const ActivationCache& cache,
                    const Matrix& grad_embeddings) {
  require(cache.pre_activations.size() == params.layers.size(),
          ErrorCode::rejected_input, "activation cache does not match the encoder");
  require(grad_embeddings.rows() == cache.rows() &&
              grad_embeddings.cols() == params.output_width(),
          ErrorCode::rejected_input, "embedding gradient does not match the cached batch");
  const std::size_t b = cache.rows();
  ParamGrads grads = ParamGrads::zeros_like(params);

  // Through the normalization: z = pre_activations.back().
  const Matrix& z = cache.pre_activations.back();
  Matrix delta(b, z.cols());
  for (std::size_t i = 0; i < b; ++i) {
    const auto zi = z.row(i);
    const auto gi = grad_embeddings.row(i);
    const double n = cache.norm_denominators[i];
    double radial = 0.0;
    for (std::size_t k = 0; k < zi.size(); ++k) radial += (zi[k] / n) * gi[k];
    auto di = delta.row(i);
    for (std::size_t k = 0; k < zi.size(); ++k) di[k] = (gi[k] - radial * zi[k] / n) / n;
  }

  if (params.kind == EncoderKind::table) {
    Matrix& table_grad = grads.layers.front().weights;
    for (std::size_t i = 0; i < b; ++i) {
      detail::axpy(1.0, delta.row(i).data(),
                   table_grad.row(static_cast<std::size_t>(cache.inputs(i, 0))).data(),
                   delta.cols());
    }
    return grads;
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix activ = l == 0 ? cache.inputs : apply_gelu(cache.pre_activations[l - 1]);
    grads.layers[l].weights = detail::matmul_tn(activ, delta);
    auto& db = grads.layers[l].bias;
    for (std::size_t i = 0; i < b; ++i) {
      const auto di = delta.row(i);
      for (std::size_t k = 0; k < di.size(); ++k) db[k] += di[k];
    }
    if (l == 0) break;
    Matrix upstream = detail::matmul(delta, detail::transpose(params.layers[l].weights));
    const Matrix& a = cache.pre_activations[l - 1];
    auto uv = upstream.values();
    auto av = a.values();
    for (std::size_t k = 0; k < uv.size(); ++k) uv[k] *= gelu_derivative(av[k]);
    delta = std::move(upstream);
  }
  return grads;
}

bool adam_step(EncoderParams& params, const ParamGrads& grads, double lr,
               const AdamConfig& config) {
  require(grads.layers.size() == params.layers.size(), ErrorCode::rejected_input,
          "gradient does not match parameters");
  if (!grads.all_finite()) return false;
  if (params.adam.first_moment.size() != params.layers.size()) {
    params.adam.first_moment = ParamGrads::zeros_like(params).layers;
    params.adam.second_moment = params.adam.first_moment;
  }
  params.adam.step += 1;
  const double t = static_cast<double>(params.adam.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto update = [&](double& param, double& m, double& v, double g) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto p = params.layers[l].weights.values();
    auto m = params.adam.first_moment[l].weights.values();
    auto v = params.adam.second_moment[l].weights.values();
    auto g = grads.layers[l].weights.values();
    for (std::size_t k = 0; k < p.size(); ++k) update(p[k], m[k], v[k], g[k]);
    auto& pb = params.layers[l].bias;
    auto& mb = params.adam.first_moment[l].bias;
    auto& vb = params.adam.second_moment[l].bias;
    for (std::size_t k = 0; k < pb.size(); ++k) update(pb[k], mb[k], vb[k], grads.layers[l].bias[k]);
  }
  return true;
}

}  // namespace ega
