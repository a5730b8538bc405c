#include <algorithm>
#include <cmath>
#include <numeric>

#include "ega/data_io.hpp"
#include "ega/error.hpp"
#include "ega/rng.hpp"

namespace ega {

void SyntheticConfig::validate() const {
  require(num_classes >= 2, ErrorCode::invalid_config, "num_classes must be >= 2");
  require(input_dim >= 2, ErrorCode::invalid_config, "input_dim must be >= 2");
  require(clusters_per_group >= 1, ErrorCode::invalid_config,
          "clusters_per_group must be >= 1");
  require(num_classes % clusters_per_group == 0, ErrorCode::invalid_config,
          "clusters_per_group must divide num_classes");
  require(noise >= 0.0 && std::isfinite(noise), ErrorCode::invalid_config, "noise must be >= 0");
  require(separation >= 0.0 && std::isfinite(separation), ErrorCode::invalid_config,
          "separation must be >= 0");
  require(class_spread >= 0.0 && std::isfinite(class_spread), ErrorCode::invalid_config,
          "class_spread must be >= 0");
  require(pairs_per_class >= 1, ErrorCode::invalid_config, "pairs_per_class must be >= 1");
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},
                     {"input_dim", c.input_dim},
                     {"clusters_per_group", c.clusters_per_group},
                     {"noise", c.noise},
                     {"separation", c.separation},
                     {"class_spread", c.class_spread},
                     {"pairs_per_class", c.pairs_per_class},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  static const char* const known[] = {"num_classes", "input_dim", "clusters_per_group",
                                      "noise", "separation", "class_spread",
                                      "pairs_per_class", "seed"};
  require(j.is_object(), ErrorCode::invalid_config, "dataset config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(std::find(std::begin(known), std::end(known), key) != std::end(known),
            ErrorCode::invalid_config, "unknown dataset config key '" + key + "'");
  }
  try {
    c.num_classes = j.value("num_classes", c.num_classes);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.clusters_per_group = j.value("clusters_per_group", c.clusters_per_group);
    c.noise = j.value("noise", c.noise);
    c.separation = j.value("separation", c.separation);
    c.class_spread = j.value("class_spread", c.class_spread);
    c.pairs_per_class = j.value("pairs_per_class", c.pairs_per_class);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("dataset config: ") + e.what());
  }
}

void PairDataset::validate() const {
  require(queries.same_shape(targets) && queries.rows() == labels.size(),
          ErrorCode::rejected_input, "dataset queries, targets and labels disagree");
  for (auto label : labels) {
    require(label < num_classes, ErrorCode::rejected_input, "dataset label out of range");
  }
}

PairDataset generate(const SyntheticConfig& config) {
  config.validate();
  const std::size_t k = config.num_classes;
  const std::size_t m = config.input_dim;
  const std::size_t groups = k / config.clusters_per_group;
  Xorshift64Star rng(config.seed);

  Matrix group_centers(groups, m);
  for (std::size_t g = 0; g < groups; ++g) {
    auto row = group_centers.row(g);
    for (double& v : row) v = rng.normal();
    const double n = norm2(row);
    for (double& v : row) v *= config.separation / n;
  }

  PairDataset out;
  out.num_classes = k;
  out.class_centers = Matrix(k, m);
  const double spread = config.class_spread * config.noise;
  for (std::size_t c = 0; c < k; ++c) {
    const auto group = group_centers.row(c / config.clusters_per_group);
    auto row = out.class_centers.row(c);
    for (std::size_t i = 0; i < m; ++i) row[i] = group[i] + spread * rng.normal();
  }

  const std::size_t n = k * config.pairs_per_class;
  out.queries = Matrix(n, m);
  out.targets = Matrix(n, m);
  out.labels.resize(n);
  for (std::size_t c = 0; c < k; ++c) {
    const auto center = out.class_centers.row(c);
    for (std::size_t p = 0; p < config.pairs_per_class; ++p) {
      const std::size_t r = c * config.pairs_per_class + p;
      out.labels[r] = c;
      auto q = out.queries.row(r);
      auto t = out.targets.row(r);
      for (std::size_t i = 0; i < m; ++i) q[i] = center[i] + config.noise * rng.normal();
      for (std::size_t i = 0; i < m; ++i) t[i] = center[i] + config.noise * rng.normal();
    }
  }
  return out;
}

namespace {

PairDataset select_records(const PairDataset& source, const std::vector<std::size_t>& rows) {
  PairDataset out;
  out.num_classes = source.num_classes;
  out.class_centers = source.class_centers;
  const std::size_t m = source.queries.cols();
  out.queries = Matrix(rows.size(), m);
  out.targets = Matrix(rows.size(), m);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(source.queries.row(rows[r]).begin(), m, out.queries.row(r).begin());
    std::copy_n(source.targets.row(rows[r]).begin(), m, out.targets.row(r).begin());
    out.labels.push_back(source.labels[rows[r]]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> records_by_class(const PairDataset& dataset) {
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t r = 0; r < dataset.size(); ++r) by_class[dataset.labels[r]].push_back(r);
  return by_class;
}

}  // namespace

std::pair<PairDataset, PairDataset> split_holdout(const PairDataset& dataset,
                                                  std::size_t per_class) {
  dataset.validate();
  require(per_class >= 1, ErrorCode::invalid_config, "holdout count must be >= 1");
  const auto by_class = records_by_class(dataset);
  for (const auto& rows : by_class) {
    require(rows.size() > per_class, ErrorCode::rejected_input,
            "every class needs more records than the holdout count");
  }
  std::vector<bool> held(dataset.size(), false);
  std::vector<std::size_t> eval_rows;
  for (std::size_t fold = 0; fold < per_class; ++fold) {
    for (const auto& rows : by_class) {
      const std::size_t r = rows[rows.size() - per_class + fold];
      held[r] = true;
      eval_rows.push_back(r);
    }
  }
  std::vector<std::size_t> train_rows;
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    if (!held[r]) train_rows.push_back(r);
  }
  return {select_records(dataset, train_rows), select_records(dataset, eval_rows)};
}

PairBatch sample_batch(const PairDataset& dataset, std::size_t batch,
                       std::uint64_t seed, std::uint64_t step) {
  const auto by_class = records_by_class(dataset);
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty()) classes.push_back(c);
  }
  require(batch >= 1, ErrorCode::invalid_config, "batch must be positive");
  require(batch <= classes.size(), ErrorCode::invalid_config,
          "batch exceeds the number of classes; in-batch negatives would collide");

  Xorshift64Star rng(mix_seed(seed, step));
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t pick = i + rng.below(classes.size() - i);
    std::swap(classes[i], classes[pick]);
  }
  std::vector<std::size_t> rows(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& pool = by_class[classes[i]];
    rows[i] = pool[rng.below(pool.size())];
  }
  const PairDataset picked = select_records(dataset, rows);
  return {picked.queries, picked.targets, picked.labels, rows};
}

}  // namespace ega
