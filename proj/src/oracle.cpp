#include "ega/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ega/error.hpp"

namespace ega::oracle {

Matrix naive_similarity(const Matrix& queries, const Matrix& targets) {
  Matrix s(queries.rows(), targets.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    for (std::size_t j = 0; j < targets.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < queries.cols(); ++k) acc += queries(i, k) * targets(j, k);
      s(i, j) = acc;
    }
  }
  return s;
}

std::vector<long double> softmax(std::span<const double> similarities, double tau) {
  std::vector<long double> out(similarities.size());
  long double peak = similarities[0];
  for (double v : similarities) peak = std::max<long double>(peak, v);
  long double total = 0.0L;
  for (std::size_t j = 0; j < similarities.size(); ++j) {
    out[j] = std::exp((similarities[j] - peak) / static_cast<long double>(tau));
    total += out[j];
  }
  for (auto& v : out) v /= total;
  return out;
}

namespace {

long double dot_ld(std::span<const double> a, std::span<const double> b) {
  long double acc = 0.0L;
  for (std::size_t k = 0; k < a.size(); ++k) acc += static_cast<long double>(a[k]) * b[k];
  return acc;
}

std::vector<double> similarity_row(const Matrix& queries, const Matrix& targets,
                                   std::size_t i) {
  std::vector<double> row(targets.rows());
  for (std::size_t j = 0; j < targets.rows(); ++j) {
    row[j] = static_cast<double>(dot_ld(queries.row(i), targets.row(j)));
  }
  return row;
}

}  // namespace

long double summed_loss(const Matrix& queries, const Matrix& targets, double tau) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    // log-sum-exp directly in long double, no double rounding of similarities
    std::vector<long double> logits(targets.rows());
    for (std::size_t j = 0; j < targets.rows(); ++j) {
      logits[j] = dot_ld(queries.row(i), targets.row(j)) / tau;
    }
    const long double peak = *std::max_element(logits.begin(), logits.end());
    long double z = 0.0L;
    for (auto l : logits) z += std::exp(l - peak);
    total += -(logits[i] - peak - std::log(z));
  }
  return total;
}

GradientBatch per_query_gradients(const Matrix& queries, const Matrix& targets,
                                  double tau, double alpha, HardnessMode mode,
                                  bool amplify) {
  const std::size_t b = queries.rows();
  const std::size_t d = queries.cols();
  std::vector<long double> gq(b * d, 0.0L), gt(b * d, 0.0L);
  const long double inv_tau = 1.0L / tau;

  for (std::size_t i = 0; i < b; ++i) {
    const auto sims = similarity_row(queries, targets, i);
    const auto p = softmax(sims, tau);
    // The query's own positive is target i; the others are its negatives.
    std::vector<long double> neg(b, 0.0L);
    long double mass = 0.0L;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) {
        neg[j] = p[j];
        mass += p[j];
      }
    }
    if (amplify && b > 1) {
      std::vector<long double> hat(b, 0.0L);
      long double hat_mass = 0.0L;
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        long double e = mode == HardnessMode::relative
                            ? static_cast<long double>(alpha) * (sims[j] - sims[i])
                            : static_cast<long double>(alpha) * sims[j];
        e = std::clamp<long double>(e, -60.0L, 60.0L);
        hat[j] = p[j] * std::exp(e);
        hat_mass += hat[j];
      }
      if (hat_mass > 0.0L) {
        for (std::size_t j = 0; j < b; ++j) neg[j] = hat[j] / hat_mass * mass;
      }
    }
    // G_q = (1/tau) sum_j p-_j (x-_j - x+)
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      for (std::size_t k = 0; k < d; ++k) {
        gq[i * d + k] += inv_tau * neg[j] * (static_cast<long double>(targets(j, k)) - targets(i, k));
      }
    }
    // G+ = (1/tau) (p+ - 1) x,  G-_j = (1/tau) p-_j x
    for (std::size_t k = 0; k < d; ++k) {
      gt[i * d + k] += inv_tau * (p[i] - 1.0L) * queries(i, k);
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      for (std::size_t k = 0; k < d; ++k) gt[j * d + k] += inv_tau * neg[j] * queries(i, k);
    }
  }
  GradientBatch out{Matrix(b, d), Matrix(b, d)};
  for (std::size_t n = 0; n < b * d; ++n) {
    out.queries.data()[n] = static_cast<double>(gq[n]);
    out.targets.data()[n] = static_cast<double>(gt[n]);
  }
  return out;
}

std::vector<double> finite_difference(
    const std::function<long double(std::span<const double>)>& scalar,
    std::span<const double> x, double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + step;
    const long double up = scalar(probe);
    probe[k] = saved - step;
    const long double down = scalar(probe);
    probe[k] = saved;
    grad[k] = static_cast<double>((up - down) / (2.0L * step));
  }
  return grad;
}

GradientBatch finite_difference_gradients(const Matrix& queries,
                                          const Matrix& targets, double tau,
                                          double step) {
  const std::size_t b = queries.rows();
  const std::size_t d = queries.cols();
  GradientBatch out{Matrix(b, d), Matrix(b, d)};
  const auto gq = finite_difference(
      [&](std::span<const double> v) {
        return summed_loss(Matrix(b, d, {v.begin(), v.end()}), targets, tau);
      },
      queries.values(), step);
  const auto gt = finite_difference(
      [&](std::span<const double> v) {
        return summed_loss(queries, Matrix(b, d, {v.begin(), v.end()}), tau);
      },
      targets.values(), step);
  std::copy(gq.begin(), gq.end(), out.queries.data());
  std::copy(gt.begin(), gt.end(), out.targets.data());
  return out;
}

std::vector<double> normalize_vjp_fd(std::span<const double> z,
                                     std::span<const double> upstream, double step) {
  return finite_difference(
      [&](std::span<const double> v) {
        long double n = 0.0L;
        for (double c : v) n += static_cast<long double>(c) * c;
        n = std::sqrt(n);
        long double acc = 0.0L;
        for (std::size_t k = 0; k < v.size(); ++k) acc += upstream[k] * (v[k] / n);
        return acc;
      },
      z, step);
}

double relative_error(std::span<const double> actual,
                      std::span<const double> expected, double floor) {
  require(actual.size() == expected.size(), ErrorCode::rejected_input,
          "relative_error size mismatch");
  double scale = floor;
  double worst = 0.0;
  for (std::size_t k = 0; k < actual.size(); ++k) {
    scale = std::max(scale, std::abs(expected[k]));
    worst = std::max(worst, std::abs(actual[k] - expected[k]));
  }
  return worst / scale;
}

double relative_error(const Matrix& actual, const Matrix& expected, double floor) {
  require(actual.same_shape(expected), ErrorCode::rejected_input,
          "relative_error shape mismatch");
  return relative_error(actual.values(), expected.values(), floor);
}

RankingStats sorted_ranking(const Matrix& queries, const Matrix& targets) {
  const std::size_t n = queries.rows();
  RankingStats stats;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sims(targets.rows());
    for (std::size_t j = 0; j < targets.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < queries.cols(); ++k) acc += queries(i, k) * targets(j, k);
      sims[j] = acc;
    }
    std::vector<std::size_t> order(targets.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    const auto pos = static_cast<std::size_t>(
        std::find(order.begin(), order.end(), i) - order.begin());
    const double rank = static_cast<double>(pos + 1);
    stats.precision_at_1 += rank <= 1 ? 1.0 : 0.0;
    stats.recall_at_5 += rank <= 5 ? 1.0 : 0.0;
    stats.recall_at_10 += rank <= 10 ? 1.0 : 0.0;
    stats.mean_rank += rank;
  }
  const double count = static_cast<double>(n);
  stats.precision_at_1 /= count;
  stats.recall_at_5 /= count;
  stats.recall_at_10 /= count;
  stats.mean_rank /= count;
  return stats;
}

}  // namespace ega::oracle
