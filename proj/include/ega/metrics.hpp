#pragma once

#include "ega/matrix.hpp"

namespace ega {

struct RetrievalMetrics {
  double precision_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double mean_rank = 0.0;
};

/// Ranks every target for each query by dot product (descending, lower index
/// wins ties). The relevant target of query i is target i.
RetrievalMetrics retrieval_metrics(const Matrix& queries, const Matrix& targets);

}  // namespace ega
