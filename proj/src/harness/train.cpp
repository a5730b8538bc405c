#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ega/error.hpp"
#include "ega/harness.hpp"
#include "ega/rng.hpp"

namespace ega::harness {
namespace {

// Independent PRNG streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;

}  // namespace

EncoderParams initial_params(const RunConfig& config, const PairDataset& data) {
  const std::uint64_t seed = mix_seed(config.seed, kInitStream);
  if (config.encoder == EncoderKind::table) {
    return init_table(2 * data.num_classes, config.dim, seed);
  }
  std::vector<std::size_t> widths{data.queries.cols()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.dim);
  return init_encoder(widths, seed);
}

PairBatch training_batch(const RunConfig& config, const PairDataset& train, std::size_t step) {
  return sample_batch(train, config.batch, mix_seed(config.seed, kBatchStream), step - 1);
}

namespace {

std::string dataset_bytes(const PairDataset& data) {
  const auto q = encode_embeddings(data.queries, data.labels);
  const auto t = encode_embeddings(data.targets, data.labels);
  std::string out(q.begin(), q.end());
  out.append(t.begin(), t.end());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << text;
}

}  // namespace

Matrix encoder_inputs(const RunConfig& config, const PairDataset& source,
                      const Matrix& side, const std::vector<std::uint64_t>& labels,
                      bool target_side) {
  if (config.encoder == EncoderKind::mlp) return side;
  Matrix ids(labels.size(), 1);
  const double offset = target_side ? static_cast<double>(source.num_classes) : 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ids(i, 0) = static_cast<double>(labels[i]) + offset;
  }
  return ids;
}

nlohmann::json to_json(const MetricsRecord& r) {
  return {{"step", r.step},
          {"mean_loss", r.mean_loss},
          {"precision_at_1", r.retrieval.precision_at_1},
          {"recall_at_5", r.retrieval.recall_at_5},
          {"recall_at_10", r.retrieval.recall_at_10},
          {"mean_rank", r.retrieval.mean_rank},
          {"mean_positive_prob", r.mean_positive_prob},
          {"train_loss", r.train_loss}};
}

MetricsRecord evaluate_embeddings(const Matrix& queries, const Matrix& targets, double tau) {
  require(queries.same_shape(targets), ErrorCode::rejected_input,
          "query and target embeddings differ in shape");
  auto normalized = [](Matrix m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      auto row = m.row(i);
      const double n = norm2(row);
      require(n > 0.0 && std::isfinite(n), ErrorCode::rejected_input,
              "cannot normalize a zero or non-finite embedding");
      for (double& v : row) v /= n;
    }
    return EmbeddingBatch(std::move(m));
  };
  const EmbeddingBatch q = normalized(queries);
  const EmbeddingBatch t = normalized(targets);
  MetricsRecord record;
  record.retrieval = retrieval_metrics(q.matrix(), t.matrix());
  const ProbabilityMatrix p = softmax_probs(similarity_matrix(q, t, tau));
  record.mean_loss = infonce_loss(p).mean;
  for (std::size_t i = 0; i < p.values.rows(); ++i) record.mean_positive_prob += p.values(i, i);
  record.mean_positive_prob /= static_cast<double>(p.values.rows());
  return record;
}

MetricsRecord evaluate(const EncoderParams& params, const PairDataset& eval_set,
                       double tau, std::size_t chunk, const RunConfig* config) {
  RunConfig defaults;
  defaults.encoder = params.kind;
  const RunConfig& cfg = config != nullptr ? *config : defaults;

  std::vector<std::vector<std::size_t>> folds;
  std::vector<std::size_t> seen(eval_set.num_classes, 0);
  for (std::size_t r = 0; r < eval_set.size(); ++r) {
    const std::size_t f = seen[eval_set.labels[r]]++;
    if (f == folds.size()) folds.emplace_back();
    folds[f].push_back(r);
  }

  MetricsRecord total;
  for (const auto& rows : folds) {
    const std::size_t n = rows.size();
    Matrix qraw(n, eval_set.queries.cols());
    Matrix traw(n, eval_set.targets.cols());
    std::vector<std::uint64_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(eval_set.queries.row(rows[i]).begin(), qraw.cols(), qraw.row(i).begin());
      std::copy_n(eval_set.targets.row(rows[i]).begin(), traw.cols(), traw.row(i).begin());
      labels[i] = eval_set.labels[rows[i]];
    }
    const ChunkPlan plan = ChunkPlan::make(n, std::min(chunk, n));
    const EmbeddingBatch q =
        embed_in_chunks(params, encoder_inputs(cfg, eval_set, qraw, labels, false), plan);
    const EmbeddingBatch t =
        embed_in_chunks(params, encoder_inputs(cfg, eval_set, traw, labels, true), plan);
    const MetricsRecord r = evaluate_embeddings(q.matrix(), t.matrix(), tau);
    const double w = static_cast<double>(n) / static_cast<double>(eval_set.size());
    total.mean_loss += w * r.mean_loss;
    total.mean_positive_prob += w * r.mean_positive_prob;
    total.retrieval.precision_at_1 += w * r.retrieval.precision_at_1;
    total.retrieval.recall_at_5 += w * r.retrieval.recall_at_5;
    total.retrieval.recall_at_10 += w * r.retrieval.recall_at_10;
    total.retrieval.mean_rank += w * r.retrieval.mean_rank;
  }
  return total;
}

MetricsRecord evaluate(const EncoderParams& params, const PairDataset& eval_set,
                       double tau, std::size_t chunk) {
  return evaluate(params, eval_set, tau, chunk, nullptr);
}

std::string metrics_csv(const std::vector<MetricsRecord>& timeline) {
  std::ostringstream out;
  out.precision(17);
  out << "step,mean_loss,precision_at_1,recall_at_5,recall_at_10,mean_rank,"
         "mean_positive_prob,train_loss\n";
  for (const auto& r : timeline) {
    out << r.step << ',' << r.mean_loss << ',' << r.retrieval.precision_at_1 << ','
        << r.retrieval.recall_at_5 << ',' << r.retrieval.recall_at_10 << ','
        << r.retrieval.mean_rank << ',' << r.mean_positive_prob << ',' << r.train_loss << '\n';
  }
  return out.str();
}

TrainResult run_train(const RunConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  const PairDataset data = load_dataset(config);
  const auto [train, eval] = split_holdout(data, config.holdout);
  require(config.batch <= train.num_classes, ErrorCode::invalid_config,
          "batch exceeds the number of classes");

  TrainResult result;
  result.params = initial_params(config, data);
  const StepConfig step_config = config.step_config();
  const std::size_t skip_budget = config.steps / 100;

  auto record = [&](std::size_t step, double train_loss) {
    MetricsRecord r = evaluate(result.params, eval, config.tau, config.chunk, &config);
    r.step = step;
    r.train_loss = train_loss;
    r.wall_seconds = elapsed();
    result.timeline.push_back(r);
  };
  record(0, 0.0);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const PairBatch batch = training_batch(config, train, step);
    const Matrix qin = encoder_inputs(config, train, batch.queries, batch.labels, false);
    const Matrix tin = encoder_inputs(config, train, batch.targets, batch.labels, true);
    const StepDiagnostics diag = train_step(result.params, qin, tin, step_config);
    result.events.zero_norm_rows += diag.zero_norm_rows;
    result.events.loss_underflow_rows += diag.loss_underflow_rows;
    result.events.amplify_fallback_rows += diag.amplify_fallback_rows;
    if (diag.skipped) {
      ++result.events.skipped_steps;
      require(result.events.skipped_steps <= skip_budget, ErrorCode::numerical_failure,
              "aborting: more than 1% of steps skipped on non-finite gradients");
    }
    if (step % config.eval_every == 0 || step == config.steps) record(step, diag.mean_loss);
  }

  nlohmann::json timeline = nlohmann::json::array();
  for (const auto& r : result.timeline) timeline.push_back(to_json(r));
  const nlohmann::json config_json = to_json(config);
  result.manifest = {
      {"config", config_json},
      {"inputs_hash", git_blob_hash(config_json.dump() + '\n' + dataset_bytes(data))},
      {"final", to_json(result.timeline.back())},
      {"timeline", timeline},
      {"events",
       {{"skipped_steps", result.events.skipped_steps},
        {"zero_norm_rows", result.events.zero_norm_rows},
        {"loss_underflow_rows", result.events.loss_underflow_rows},
        {"amplify_fallback_rows", result.events.amplify_fallback_rows}}}};

  if (!config.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    require(!ec, ErrorCode::io, "cannot create '" + config.out_dir + "'");
    write_checkpoint(config.out_dir + "/checkpoint.egap", result.params);
    write_text(config.out_dir + "/manifest.json", result.manifest.dump(2) + '\n');
    write_text(config.out_dir + "/metrics.csv", metrics_csv(result.timeline));
    nlohmann::json timing = nlohmann::json::array();
    for (const auto& r : result.timeline) {
      timing.push_back({{"step", r.step}, {"wall_seconds", r.wall_seconds}});
    }
    write_text(config.out_dir + "/timing.json", timing.dump(2) + '\n');
  }
  return result;
}

}  // namespace ega::harness
