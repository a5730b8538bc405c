#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ega/data_io.hpp"
#include "ega/ega.hpp"
#include "ega/encoder.hpp"
#include "ega/gradcache.hpp"
#include "ega/metrics.hpp"

namespace ega::harness {

struct RunConfig {
  LossMode mode = LossMode::ega;
  HardnessMode hardness = HardnessMode::relative;
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  std::size_t batch = 32;
  std::size_t chunk = 8;
  std::size_t steps = 300;
  double lr = 3e-3;
  EncoderKind encoder = EncoderKind::mlp;
  std::vector<std::size_t> hidden = {64};
  std::size_t dim = 16;
  SyntheticConfig synthetic;           // used when data_dir is empty
  std::string data_dir;                // directory written by gen-data
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  std::size_t holdout = 8;             // held-out records per class (eval folds)
  std::string out_dir;

  void validate() const;
  StepConfig step_config() const;
};

nlohmann::json to_json(const RunConfig& config);

/// `--data` argument: inline JSON object, path to a JSON file, or a dataset
/// directory. Synthetic configs without a "seed" field inherit config.seed.
void apply_data_source(RunConfig& config, const std::string& source);

/// Synthetic data generated from config.synthetic or read from data_dir.
PairDataset load_dataset(const RunConfig& config);

struct MetricsRecord {
  std::size_t step = 0;
  double mean_loss = 0.0;          // info-NCE on the held-out pairs
  RetrievalMetrics retrieval;
  double mean_positive_prob = 0.0;
  double train_loss = 0.0;         // loss of the batch just trained on; 0 at step 0
  double wall_seconds = 0.0;       // not written to the manifest
};

nlohmann::json to_json(const MetricsRecord& record);

/// Embeds held-out queries/targets and scores them. Records are grouped into
/// folds by per-class occurrence (the f-th record of each class forms fold f),
/// so every fold ranks against true negatives only; metrics are the
/// per-query average across folds.
MetricsRecord evaluate(const EncoderParams& params, const PairDataset& eval_set,
                       double tau, std::size_t chunk);

/// Scores precomputed embeddings (rows are normalized first).
MetricsRecord evaluate_embeddings(const Matrix& queries, const Matrix& targets, double tau);

struct NumericEvents {
  std::size_t skipped_steps = 0;
  std::size_t zero_norm_rows = 0;
  std::size_t loss_underflow_rows = 0;
  std::size_t amplify_fallback_rows = 0;
};

struct TrainResult {
  std::vector<MetricsRecord> timeline;
  EncoderParams params;
  NumericEvents events;
  nlohmann::json manifest;
};

/// Trains from config.seed; with a non-empty out_dir writes checkpoint.egap,
/// manifest.json, metrics.csv and timing.json there.
TrainResult run_train(const RunConfig& config);

/// Encoder state every run with this config starts from.
EncoderParams initial_params(const RunConfig& config, const PairDataset& data);

/// Training batch for 1-based step `step`.
PairBatch training_batch(const RunConfig& config, const PairDataset& train, std::size_t step);

/// Builds the encoder's inputs for a batch (identity for MLP encoders, row
/// ids for table encoders).
Matrix encoder_inputs(const RunConfig& config, const PairDataset& source,
                      const Matrix& side, const std::vector<std::uint64_t>& labels,
                      bool target_side);

std::string metrics_csv(const std::vector<MetricsRecord>& timeline);

// ---------------------------------------------------------------------------

using GradientFn = std::function<GradientBatch(const ProbabilityMatrix&, const EmbeddingBatch&,
                                               const EmbeddingBatch&, double)>;

struct GradcheckOptions {
  std::vector<std::size_t> batch_sizes = {2, 4, 8};
  std::vector<std::size_t> dims = {4, 16};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  GradientFn baseline_grads = infonce_grads;  // replaceable for mutation tests
};

struct CheckResult {
  std::string family;
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  std::string worst_case;  // "seed=.. B=.. d=.." of the largest error
  bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::size_t family_count() const;
  nlohmann::json to_json() const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

// ---------------------------------------------------------------------------

struct VariantResult {
  std::string name;
  RunConfig config;
  TrainResult result;
};

struct AblationResult {
  std::vector<VariantResult> variants;  // baseline, ega+absolute, ega+relative
  double mode_pbar_max_diff = 0.0;      // |Pbar_absolute - Pbar_relative| on batch 0
  std::string csv;
  nlohmann::json summary;
};

/// Runs the three variants from the same seed and data; with an out_dir,
/// writes ablation.csv, ablation.json and each variant under <out>/<name>/.
AblationResult run_ablation(const RunConfig& base);

/// git blob SHA-1 ("blob <size>\0" + bytes), hex encoded.
std::string git_blob_hash(const std::string& bytes);

}  // namespace ega::harness
