#include <filesystem>
#include <fstream>
#include <sstream>

#include "ega/error.hpp"
#include "ega/harness.hpp"

namespace ega::harness {
namespace {

// |Pbar(absolute) - Pbar(relative)| on the first training batch under the
// initial encoder, the state every variant starts from.
double first_batch_mode_gap(const RunConfig& base) {
  RunConfig probe = base;
  probe.steps = 1;
  probe.out_dir.clear();
  const PairDataset data = load_dataset(probe);
  const auto [train, eval] = split_holdout(data, probe.holdout);
  const EncoderParams params = initial_params(probe, data);
  const PairBatch batch = training_batch(probe, train, 1);
  const EmbeddingBatch q =
      embed(params, encoder_inputs(probe, train, batch.queries, batch.labels, false));
  const EmbeddingBatch t =
      embed(params, encoder_inputs(probe, train, batch.targets, batch.labels, true));
  const SimilarityMatrix s = similarity_matrix(q, t, probe.tau);
  const ProbabilityMatrix p = softmax_probs(s);
  const auto rel = amplify_probs(p, hardness_matrix(s, probe.alpha, HardnessMode::relative));
  const auto abs = amplify_probs(p, hardness_matrix(s, probe.alpha, HardnessMode::absolute));
  return max_abs_diff(rel.values, abs.values);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << text;
}

}  // namespace

AblationResult run_ablation(const RunConfig& base) {
  base.validate();
  AblationResult out;

  struct Variant {
    const char* name;
    LossMode mode;
    HardnessMode hardness;
  };
  const Variant variants[] = {{"baseline", LossMode::baseline, HardnessMode::relative},
                              {"ega_absolute", LossMode::ega, HardnessMode::absolute},
                              {"ega_relative", LossMode::ega, HardnessMode::relative}};
  for (const auto& v : variants) {
    RunConfig config = base;
    config.mode = v.mode;
    config.hardness = v.hardness;
    config.out_dir = base.out_dir.empty() ? "" : base.out_dir + "/" + v.name;
    out.variants.push_back({v.name, config, run_train(config)});
  }
  out.mode_pbar_max_diff = first_batch_mode_gap(base);

  std::ostringstream csv;
  csv.precision(17);
  csv << "variant,mode,hardness,alpha,precision_at_1,recall_at_5,recall_at_10,mean_rank,"
         "mean_loss,mean_positive_prob\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& v : out.variants) {
    const MetricsRecord& last = v.result.timeline.back();
    csv << v.name << ',' << to_string(v.config.mode) << ','
        << (v.config.mode == LossMode::ega ? to_string(v.config.hardness) : "none") << ','
        << v.config.alpha << ',' << last.retrieval.precision_at_1 << ','
        << last.retrieval.recall_at_5 << ',' << last.retrieval.recall_at_10 << ','
        << last.retrieval.mean_rank << ',' << last.mean_loss << ',' << last.mean_positive_prob
        << '\n';
    rows.push_back({{"variant", v.name},
                    {"final", to_json(last)},
                    {"inputs_hash", v.result.manifest["inputs_hash"]}});
  }
  out.csv = csv.str();
  nlohmann::json base_json = to_json(base);
  base_json.erase("mode");
  base_json.erase("hardness");
  out.summary = {{"base_config", base_json},
                 {"variants", rows},
                 {"pbar_absolute_vs_relative_max_diff", out.mode_pbar_max_diff}};

  if (!base.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(base.out_dir, ec);
    require(!ec, ErrorCode::io, "cannot create '" + base.out_dir + "'");
    write_text(base.out_dir + "/ablation.csv", out.csv);
    write_text(base.out_dir + "/ablation.json", out.summary.dump(2) + '\n');
  }
  return out;
}

}  // namespace ega::harness
