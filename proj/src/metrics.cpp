#include "ega/metrics.hpp"

#include <vector>

#include "ega/error.hpp"
#include "linalg.hpp"

namespace ega {

RetrievalMetrics retrieval_metrics(const Matrix& queries, const Matrix& targets) {
  require(queries.cols() == targets.cols(), ErrorCode::rejected_input,
          "query and target dimensions differ");
  require(queries.rows() == targets.rows() && queries.rows() >= 1,
          ErrorCode::rejected_input, "retrieval needs one target per query");
  const std::size_t n = queries.rows();
  const Matrix s = detail::matmul(queries, detail::transpose(targets));
  std::vector<std::size_t> ranks(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double positive = s(i, i);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (s(i, j) > positive || (j < i && s(i, j) == positive)) ++ahead;
    }
    ranks[i] = ahead + 1;
  }
  RetrievalMetrics m;
  for (std::size_t r : ranks) {
    m.precision_at_1 += r <= 1 ? 1.0 : 0.0;
    m.recall_at_5 += r <= 5 ? 1.0 : 0.0;
    m.recall_at_10 += r <= 10 ? 1.0 : 0.0;
    m.mean_rank += static_cast<double>(r);
  }
  const double count = static_cast<double>(n);
  m.precision_at_1 /= count;
  m.recall_at_5 /= count;
  m.recall_at_10 /= count;
  m.mean_rank /= count;
  return m;
}

}  // namespace ega
