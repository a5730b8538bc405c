#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ega/contrastive.hpp"
#include "ega/error.hpp"
#include "ega/oracle.hpp"
#include "support.hpp"

namespace ega {
namespace {

using testing::random_batch;

SimilarityMatrix similarity_of(std::size_t n, std::vector<double> values, double tau) {
  return {Matrix(n, n, std::move(values)), tau};
}

// Residual of v after projecting onto the row space of `basis`.
double span_residual(std::span<const double> v, const Matrix& basis) {
  std::vector<std::vector<double>> ortho;
  for (std::size_t r = 0; r < basis.rows(); ++r) {
    std::vector<double> u(basis.row(r).begin(), basis.row(r).end());
    for (const auto& e : ortho) {
      const double c = dot(u, e);
      for (std::size_t k = 0; k < u.size(); ++k) u[k] -= c * e[k];
    }
    const double n = norm2(u);
    if (n < 1e-10) continue;
    for (double& x : u) x /= n;
    ortho.push_back(std::move(u));
  }
  std::vector<double> res(v.begin(), v.end());
  for (const auto& e : ortho) {
    const double c = dot(res, e);
    for (std::size_t k = 0; k < res.size(); ++k) res[k] -= c * e[k];
  }
  return norm2(res);
}

TEST(EmbeddingBatch, RejectsInvalidRows) {
  EXPECT_THROW(EmbeddingBatch(Matrix(0, 4)), Error);
  EXPECT_THROW(EmbeddingBatch(Matrix(2, 1, 1.0)), Error);
  EXPECT_THROW(EmbeddingBatch(Matrix(1, 2, std::vector<double>{1.0, 1.0})), Error);
  EXPECT_THROW(EmbeddingBatch(Matrix(1, 2, std::vector<double>{NAN, 0.0})), Error);
  EXPECT_NO_THROW(EmbeddingBatch(Matrix(1, 2, std::vector<double>{0.6, 0.8})));
}

TEST(Similarity, StandardBasisGivesIdentity) {
  const EmbeddingBatch e(identity(2));
  const SimilarityMatrix s = similarity_matrix(e, e, 0.02);
  EXPECT_EQ(s.values, identity(2));
  EXPECT_EQ(s.tau, 0.02);
}

TEST(Similarity, SingleDotProduct) {
  const EmbeddingBatch q(Matrix(1, 2, std::vector<double>{1.0, 0.0}));
  const EmbeddingBatch t(Matrix(1, 2, std::vector<double>{0.6, 0.8}));
  EXPECT_DOUBLE_EQ(similarity_matrix(q, t, 1.0).values(0, 0), 0.6);
}

TEST(Similarity, MatchesNaiveLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto q = random_batch(4, 8, seed);
    const auto t = random_batch(4, 8, seed + 100);
    const Matrix expected = oracle::naive_similarity(q.matrix(), t.matrix());
    EXPECT_LE(max_abs_diff(similarity_matrix(q, t, 0.02).values, expected), 1e-15);
  }
}

TEST(Similarity, RejectsBadTauAndShapes) {
  const auto q = random_batch(3, 4, 1);
  EXPECT_THROW(similarity_matrix(q, q, 0.0), Error);
  EXPECT_THROW(similarity_matrix(q, q, -1.0), Error);
  EXPECT_THROW(similarity_matrix(q, q, NAN), Error);
  EXPECT_THROW(similarity_matrix(q, random_batch(2, 4, 2), 1.0), Error);
  EXPECT_THROW(similarity_matrix(q, random_batch(3, 5, 2), 1.0), Error);
}

TEST(Softmax, EqualRowIsUniform) {
  for (double tau : {0.02, 1.0, 7.0}) {
    const auto p = softmax_probs(similarity_of(3, std::vector<double>(9, 0.37), tau));
    for (double v : p.values.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, KnownRowAtUnitTemperature) {
  const auto p = softmax_probs(similarity_of(3, {0.5, 0.5, 0.0, 0, 0, 0, 0, 0, 0}, 1.0));
  EXPECT_NEAR(p.values(0, 0), 0.3837, 5e-5);
  EXPECT_NEAR(p.values(0, 1), 0.3837, 5e-5);
  EXPECT_NEAR(p.values(0, 2), 0.2327, 5e-5);
}

TEST(Softmax, SharpTemperatureStaysFinite) {
  const auto p = softmax_probs(similarity_of(2, {1.0, 0.9, 0.0, 0.0}, 0.02));
  EXPECT_NEAR(p.values(0, 0), 1.0 / (1.0 + std::exp(-5.0)), 1e-15);
  EXPECT_NEAR(p.values(0, 0), 0.9933, 5e-5);
}

TEST(Softmax, RowsSumToOneAndMatchExtendedPrecision) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = random_batch(8, 16, seed);
    const auto t = random_batch(8, 16, seed + 50);
    const auto s = similarity_matrix(q, t, 0.02);
    const auto p = softmax_probs(s);
    for (std::size_t i = 0; i < 8; ++i) {
      double sum = 0.0;
      const auto ref = oracle::softmax(s.values.row(i), 0.02);
      for (std::size_t j = 0; j < 8; ++j) {
        sum += p.values(i, j);
        EXPECT_NEAR(p.values(i, j), static_cast<double>(ref[j]), 1e-12);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, ShiftInvariantPerRow) {
  const auto q = random_batch(5, 4, 3);
  const auto t = random_batch(5, 4, 4);
  SimilarityMatrix s = similarity_matrix(q, t, 0.05);
  const auto before = softmax_probs(s);
  for (std::size_t j = 0; j < 5; ++j) s.values(2, j) += 13.25;
  const auto after = softmax_probs(s);
  EXPECT_LE(max_abs_diff(before.values, after.values), 1e-12);
}

TEST(Loss, SingleTargetIsZero) {
  const auto q = random_batch(1, 4, 1);
  const auto p = softmax_probs(similarity_matrix(q, random_batch(1, 4, 2), 0.02));
  const auto loss = infonce_loss(p);
  EXPECT_EQ(loss.mean, 0.0);
  EXPECT_EQ(loss.per_query.at(0), 0.0);
}

TEST(Loss, UniformIsLogN) {
  const auto p = softmax_probs(similarity_of(3, std::vector<double>(9, 0.1), 0.5));
  const auto loss = infonce_loss(p);
  EXPECT_NEAR(loss.mean, std::log(3.0), 1e-12);
  EXPECT_NEAR(loss.mean, 1.0986, 5e-5);
}

TEST(Loss, KnownRow) {
  const auto p = softmax_probs(similarity_of(3, {0.5, 0.5, 0.0, 0, 0, 0, 0, 0, 0}, 1.0));
  EXPECT_NEAR(infonce_loss(p).per_query[0], 0.9580, 5e-5);
}

TEST(Loss, MatchesExtendedPrecision) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = random_batch(8, 4, seed);
    const auto t = random_batch(8, 4, seed + 7);
    const auto loss = infonce_loss(softmax_probs(similarity_matrix(q, t, 0.1)));
    const double expected = static_cast<double>(oracle::summed_loss(q.matrix(), t.matrix(), 0.1));
    EXPECT_NEAR(loss.mean * 8.0, expected, 1e-11 * std::max(1.0, expected));
    EXPECT_EQ(loss.underflow_rows, 0u);
  }
}

TEST(Loss, ClampsVanishingPositive) {
  const auto p = softmax_probs(similarity_of(2, {-1.0, 1.0, 0.0, 0.0}, 0.001));
  const auto loss = infonce_loss(p);
  EXPECT_TRUE(std::isfinite(loss.mean));
  EXPECT_EQ(loss.underflow_rows, 1u);
}

TEST(Gradients, SingleTargetIsZero) {
  const auto q = random_batch(1, 4, 1);
  const auto t = random_batch(1, 4, 2);
  const auto g = infonce_grads(softmax_probs(similarity_matrix(q, t, 0.02)), q, t, 0.02);
  for (double v : g.queries.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.targets.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::size_t b : {2, 4, 8}) {
    for (std::size_t d : {4, 16}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const double tau = 0.05 + 0.3 * static_cast<double>(seed);
        const auto q = random_batch(b, d, seed);
        const auto t = random_batch(b, d, seed + 1000);
        const auto g = infonce_grads(softmax_probs(similarity_matrix(q, t, tau)), q, t, tau);
        const auto fd = oracle::finite_difference_gradients(q.matrix(), t.matrix(), tau, 1e-5);
        EXPECT_LE(oracle::relative_error(g.queries, fd.queries), 1e-6);
        EXPECT_LE(oracle::relative_error(g.targets, fd.targets), 1e-6);
      }
    }
  }
}

TEST(Gradients, TargetGradientsSumToZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = random_batch(8, 16, seed);
    const auto t = random_batch(8, 16, seed + 3);
    const auto g = infonce_grads(softmax_probs(similarity_matrix(q, t, 0.02)), q, t, 0.02);
    for (std::size_t k = 0; k < 16; ++k) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 8; ++j) sum += g.targets(j, k);
      EXPECT_LE(std::abs(sum), 1e-12);
    }
  }
}

TEST(Gradients, LieInSpanOfOtherTower) {
  const auto q = random_batch(4, 16, 11);
  const auto t = random_batch(4, 16, 12);
  const auto g = infonce_grads(softmax_probs(similarity_matrix(q, t, 0.1)), q, t, 0.1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE(span_residual(g.queries.row(i), t.matrix()), 1e-10);
    EXPECT_LE(span_residual(g.targets.row(i), q.matrix()), 1e-10);
  }
}

}  // namespace
}  // namespace ega
