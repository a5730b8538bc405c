#include "linalg.hpp"

#include <algorithm>

#include "ega/error.hpp"

namespace ega::detail {
namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColumnBlock = 32;

// Wider vector clones without FMA: the per-entry operation sequence (and so
// every result bit) is the same as the baseline build.
#define EGA_VECTOR_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))

// Updates rows [i0, i0 + count) of out; each row of b is loaded once per block.
EGA_VECTOR_CLONES
void multiply_block(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i0,
                    std::size_t count) {
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t p = 0; p < inner; ++p) {
    const double* brow = b.data() + p * m;
    for (std::size_t r = 0; r < count; ++r) {
      axpy(a(i0 + r, p), brow, out.data() + (i0 + r) * m, m);
    }
  }
}

EGA_VECTOR_CLONES
void multiply_tn_block(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r0,
                       std::size_t r1) {
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* brow = b.data() + p * m;
    const double* arow = a.data() + p * n;
    for (std::size_t r = r0; r < r1; ++r) axpy(arow[r], brow, out.data() + r * m, m);
  }
}

}  // namespace

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  constexpr std::size_t tile = 32;
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += tile) {
    for (std::size_t j0 = 0; j0 < a.cols(); j0 += tile) {
      const std::size_t i1 = std::min(i0 + tile, a.rows());
      const std::size_t j1 = std::min(j0 + tile, a.cols());
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out(j, i) = a(i, j);
      }
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::rejected_input, "matmul shape mismatch");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows();
  const auto blocks = static_cast<std::ptrdiff_t>((n + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    multiply_block(a, b, out, i0, std::min(kRowBlock, n - i0));
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorCode::rejected_input, "matmul_tn shape mismatch");
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  Matrix out(n, m);
  const auto blocks = static_cast<std::ptrdiff_t>((n + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kColumnBlock;
    multiply_tn_block(a, b, out, r0, std::min(r0 + kColumnBlock, n));
  }
  return out;
}

Matrix matmul_serial(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::rejected_input, "matmul shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) multiply_block(a, b, out, i, 1);
  return out;
}

}  // namespace ega::detail
