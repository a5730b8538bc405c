#include "ega/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "ega/error.hpp"

namespace ega {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config: return "invalid configuration";
    case ErrorCode::rejected_input: return "rejected input";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::truncated_payload: return "truncated payload";
    case ErrorCode::unknown_dtype: return "unknown dtype";
    case ErrorCode::trailing_bytes: return "trailing bytes";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::numerical_failure: return "numerical failure";
  }
  return "unknown error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorCode::rejected_input,
          "matrix data size does not match shape");
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= rows_, ErrorCode::rejected_input,
          "row slice out of range");
  Matrix out(end - begin, cols_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>(end * cols_),
            out.data_.begin());
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), ErrorCode::rejected_input, "shape mismatch");
  double worst = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t k = 0; k < va.size(); ++k) {
    worst = std::max(worst, std::abs(va[k] - vb[k]));
  }
  return worst;
}

}  // namespace ega
