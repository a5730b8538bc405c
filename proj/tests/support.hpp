#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ega/contrastive.hpp"
#include "ega/matrix.hpp"
#include "ega/rng.hpp"

namespace ega::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m = random_matrix(rows, cols, seed);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = m.row(i);
    const double n = norm2(r);
    for (double& v : r) v /= n;
  }
  return m;
}

inline EmbeddingBatch random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return EmbeddingBatch(random_unit_rows(rows, cols, seed));
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ega_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace ega::testing
