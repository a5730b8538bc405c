#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ega/matrix.hpp"

namespace ega {

/// Planted hard-negative task. Classes come in groups of
/// `clusters_per_group`; group centers are `separation` times random unit
/// directions, class centers add a per-coordinate N(0, (class_spread*noise)^2)
/// offset, and every query/target adds per-coordinate N(0, noise^2).
struct SyntheticConfig {
  std::size_t num_classes = 64;
  std::size_t input_dim = 32;
  std::size_t clusters_per_group = 4;
  double noise = 0.1;
  double separation = 3.0;
  double class_spread = 1.0;
  std::size_t pairs_per_class = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

struct PairDataset {
  Matrix queries;                     // one row per record
  Matrix targets;
  std::vector<std::uint64_t> labels;  // class of each record
  Matrix class_centers;               // num_classes x input_dim; empty if unknown
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

PairDataset generate(const SyntheticConfig& config);

/// Moves the last `per_class` records of every class into a second dataset,
/// ordered fold by fold: fold f holds the f-th held-out record of each class.
std::pair<PairDataset, PairDataset> split_holdout(const PairDataset& dataset,
                                                  std::size_t per_class = 1);

struct PairBatch {
  Matrix queries;
  Matrix targets;
  std::vector<std::uint64_t> labels;
  std::vector<std::size_t> records;
};

/// B records with pairwise-distinct labels, a pure function of (seed, step).
PairBatch sample_batch(const PairDataset& dataset, std::size_t batch,
                       std::uint64_t seed, std::uint64_t step);

enum class Dtype : std::uint16_t { f32 = 1, f64 = 2 };

/// On-disk layout, little-endian: "EGAE", u16 version (1), u64 count,
/// u64 dim, u16 dtype, count*dim values row-major, count u64 labels.
struct EmbeddingTable {
  Matrix values;
  std::vector<std::uint64_t> labels;
  Dtype dtype = Dtype::f64;
};

/// The exact bytes write_embeddings puts on disk.
std::vector<char> encode_embeddings(const Matrix& values,
                                    const std::vector<std::uint64_t>& labels,
                                    Dtype dtype = Dtype::f64);
void write_embeddings(const std::string& path, const Matrix& values,
                      const std::vector<std::uint64_t>& labels, Dtype dtype = Dtype::f64);
EmbeddingTable read_embeddings(const std::string& path);

/// A dataset directory holds queries.egae and targets.egae (rows paired by
/// index, identical labels).
void write_dataset(const std::string& dir, const PairDataset& dataset);
PairDataset read_dataset(const std::string& dir);

}  // namespace ega
