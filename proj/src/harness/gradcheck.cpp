#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ega/error.hpp"
#include "ega/harness.hpp"
#include "ega/oracle.hpp"
#include "ega/reference.hpp"
#include "ega/rng.hpp"

namespace ega::harness {
namespace {

constexpr double kTaus[] = {0.02, 0.05, 0.1, 0.5, 1.0};
constexpr double kFdStep = 1e-5;

Matrix random_unit_rows(std::size_t rows, std::size_t dim, Xorshift64Star& rng) {
  Matrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = m.row(i);
    for (double& v : row) v = rng.normal();
    const double n = norm2(row);
    for (double& v : row) v /= n;
  }
  return m;
}

class Collector {
 public:
  void add(const std::string& family, const std::string& name, double tolerance,
           double error, const std::string& where) {
    auto& check = checks_[{family, name}];
    check.family = family;
    check.name = name;
    check.tolerance = tolerance;
    ++check.instances;
    const double e = std::isnan(error) ? INFINITY : error;
    if (check.instances == 1 || e > check.max_error) {
      check.max_error = e;
      check.worst_case = where;
    }
  }

  std::vector<CheckResult> results() const {
    std::vector<CheckResult> out;
    for (const auto& [key, check] : checks_) out.push_back(check);
    return out;
  }

 private:
  std::map<std::pair<std::string, std::string>, CheckResult> checks_;
};

double column_sum_error(const Matrix& g) {
  double worst = 0.0;
  for (std::size_t k = 0; k < g.cols(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.rows(); ++j) acc += g(j, k);
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

double negative_mass_error(const Matrix& p, const Matrix& pbar) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      if (j == i) continue;
      a += p(i, j);
      b += pbar(i, j);
    }
    worst = std::max(worst, std::abs(a - b));
  }
  return worst;
}

double max_of(double a, double b) { return std::isnan(a) || std::isnan(b) ? INFINITY : std::max(a, b); }

void embedding_checks(Collector& out, const GradcheckOptions& options, std::uint64_t seed,
                      std::size_t b, std::size_t d) {
  Xorshift64Star rng(mix_seed(seed, b * 131 + d));
  const double tau = kTaus[seed % std::size(kTaus)];
  const EmbeddingBatch q(random_unit_rows(b, d, rng));
  const EmbeddingBatch t(random_unit_rows(b, d, rng));
  std::ostringstream where;
  where << "seed=" << seed << " B=" << b << " d=" << d << " tau=" << tau;
  const std::string at = where.str();

  const SimilarityMatrix s = similarity_matrix(q, t, tau);
  out.add("similarity", "naive_loop", 1e-15,
          max_abs_diff(s.values, oracle::naive_similarity(q.matrix(), t.matrix())), at);

  const ProbabilityMatrix p = softmax_probs(s);
  double softmax_err = 0.0, row_sum_err = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto expected = oracle::softmax(s.values.row(i), tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      softmax_err = max_of(softmax_err, std::abs(p.values(i, j) - static_cast<double>(expected[j])));
      sum += p.values(i, j);
    }
    row_sum_err = max_of(row_sum_err, std::abs(sum - 1.0));
  }
  out.add("softmax", "extended_precision", 1e-12, softmax_err, at);
  out.add("softmax", "row_sums", 1e-12, row_sum_err, at);

  const LossResult loss = infonce_loss(p);
  const double expected_loss =
      static_cast<double>(oracle::summed_loss(q.matrix(), t.matrix(), tau)) / static_cast<double>(b);
  out.add("loss", "extended_precision", 1e-12,
          std::abs(loss.mean - expected_loss) / std::max(1.0, std::abs(expected_loss)), at);

  // Finite differences of the summed loss.
  const GradientBatch fd = oracle::finite_difference_gradients(q.matrix(), t.matrix(), tau, kFdStep);
  const GradientBatch base = options.baseline_grads(p, q, t, tau);
  out.add("baseline_grads", "finite_difference", 1e-6,
          max_of(oracle::relative_error(base.queries, fd.queries),
                 oracle::relative_error(base.targets, fd.targets)),
          at);
  out.add("conservation", "baseline_target_sum", 1e-12, column_sum_error(base.targets), at);

  // EGA at alpha = 0 against the baseline and against finite differences.
  const PipelineResult zero = ega_pipeline(q, t, {tau, 0.0, HardnessMode::relative});
  out.add("ega_grads", "alpha0_vs_baseline", 1e-12,
          max_of(max_abs_diff(zero.grads.queries, base.queries),
                 max_abs_diff(zero.grads.targets, base.targets)),
          at);
  out.add("ega_grads", "alpha0_finite_difference", 1e-6,
          max_of(oracle::relative_error(zero.grads.queries, fd.queries),
                 oracle::relative_error(zero.grads.targets, fd.targets)),
          at);

  // EGA at the default hyper-parameters against the per-query oracle.
  for (HardnessMode mode : {HardnessMode::relative, HardnessMode::absolute}) {
    const EgaConfig config{kDefaultTau, kDefaultAlpha, mode};
    const PipelineResult amp = ega_pipeline(q, t, config);
    const GradientBatch naive = oracle::per_query_gradients(
        q.matrix(), t.matrix(), config.tau, config.alpha, mode, true);
    const std::string suffix = std::string("_") + to_string(mode);
    out.add("ega_grads", "per_query_oracle" + suffix, 1e-10,
            max_of(max_abs_diff(amp.grads.queries, naive.queries),
                   max_abs_diff(amp.grads.targets, naive.targets)),
            at);
    out.add("negative_mass", "preserved" + suffix, 1e-12,
            negative_mass_error(amp.probs.values, amp.amplified.values), at);
    out.add("conservation", "ega_target_sum" + suffix, 1e-12,
            column_sum_error(amp.grads.targets), at);
    const PipelineResult serial = reference::ega_pipeline(q, t, config);
    out.add("reference_kernels", "parallel_vs_serial" + suffix, 1e-12,
            max_of(max_abs_diff(amp.grads.queries, serial.grads.queries),
                   max_abs_diff(amp.grads.targets, serial.grads.targets)),
            at);
  }
  const SimilarityMatrix s_default = similarity_matrix(q, t, kDefaultTau);
  const ProbabilityMatrix p_default = softmax_probs(s_default);
  const auto rel = amplify_probs(p_default, hardness_matrix(s_default, kDefaultAlpha, HardnessMode::relative));
  const auto abs = amplify_probs(p_default, hardness_matrix(s_default, kDefaultAlpha, HardnessMode::absolute));
  out.add("negative_mass", "hardness_scale_invariance", 1e-12,
          max_abs_diff(rel.values, abs.values), at);

  // Normalization Jacobian, one sample per instance.
  std::vector<double> z(d), g(d);
  for (double& v : z) v = rng.normal();
  for (double& v : g) v = rng.normal();
  const auto analytic = normalize_backward(z, g);
  out.add("normalize_jacobian", "finite_difference", 1e-6,
          oracle::relative_error(analytic, oracle::normalize_vjp_fd(z, g, kFdStep)), at);
}

void encoder_checks(Collector& out, std::uint64_t seed) {
  // Composed loss(normalize(MLP(x))) against finite differences of every parameter.
  const std::vector<std::size_t> widths{3, 5, 4};
  const std::size_t b = 4;
  const double tau = 0.1;
  Xorshift64Star rng(mix_seed(seed, 77));
  EncoderParams params = init_encoder(widths, mix_seed(seed, 78));
  Matrix qin(b, widths.front()), tin(b, widths.front());
  for (double& v : qin.values()) v = rng.normal();
  for (double& v : tin.values()) v = rng.normal();

  auto total_loss = [&](const EncoderParams& p) {
    return oracle::summed_loss(forward(p, qin).embeddings.matrix(),
                               forward(p, tin).embeddings.matrix(), tau);
  };
  const ForwardResult fq = forward(params, qin);
  const ForwardResult ft = forward(params, tin);
  const PipelineResult res = ega_pipeline(fq.embeddings, ft.embeddings, {tau, 0.0, HardnessMode::relative});
  ParamGrads analytic = backward(params, fq.cache, res.grads.queries);
  analytic += backward(params, ft.cache, res.grads.targets);

  std::vector<double> numeric;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto perturb = [&](double& slot) {
      const double saved = slot;
      slot = saved + kFdStep;
      const long double up = total_loss(params);
      slot = saved - kFdStep;
      const long double down = total_loss(params);
      slot = saved;
      numeric.push_back(static_cast<double>((up - down) / (2.0L * kFdStep)));
    };
    for (double& w : params.layers[l].weights.values()) perturb(w);
    for (double& w : params.layers[l].bias) perturb(w);
  }
  std::ostringstream where;
  where << "seed=" << seed << " B=4 widths=[3,5,4]";
  out.add("encoder_grads", "composed_finite_difference", 1e-5,
          oracle::relative_error(analytic.flatten(), numeric), where.str());

  // Chunked backward agrees with the direct one for every chunk size.
  const ForwardResult direct = forward(params, qin);
  const ParamGrads reference_grads = backward(params, direct.cache, res.grads.queries);
  for (std::size_t chunk : {std::size_t{1}, std::size_t{2}, b}) {
    const CachedBackward cached =
        cached_backward(params, qin, res.grads.queries, ChunkPlan::make(b, chunk));
    const auto a = cached.grads.flatten();
    const auto e = reference_grads.flatten();
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = max_of(worst, std::abs(a[k] - e[k]));
    out.add("chunk_invariance", "cached_vs_direct_backward", 1e-10, worst,
            where.str() + " chunk=" + std::to_string(chunk));
  }
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

std::size_t GradcheckReport::family_count() const {
  std::set<std::string> families;
  for (const auto& c : checks) families.insert(c.family);
  return families.size();
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : checks) {
    list.push_back({{"family", c.family},
                    {"check", c.name},
                    {"max_error", c.max_error},
                    {"tolerance", c.tolerance},
                    {"instances", c.instances},
                    {"worst_case", c.worst_case},
                    {"passed", c.passed()}});
  }
  return {{"passed", passed()}, {"families", family_count()}, {"checks", list}};
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  require(!options.seeds.empty() && !options.batch_sizes.empty() && !options.dims.empty(),
          ErrorCode::invalid_config, "gradcheck needs seeds, batch sizes and dims");
  for (std::size_t d : options.dims) {
    require(d >= 2, ErrorCode::invalid_config, "gradcheck dims must be >= 2");
  }
  Collector collector;
  for (std::uint64_t seed : options.seeds) {
    for (std::size_t b : options.batch_sizes) {
      for (std::size_t d : options.dims) embedding_checks(collector, options, seed, b, d);
    }
    encoder_checks(collector, seed);
  }
  return {collector.results()};
}

}  // namespace ega::harness
