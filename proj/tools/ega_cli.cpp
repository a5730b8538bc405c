// Command-line front end: gen-data, train, eval, gradcheck, ablate, grad.

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "ega/data_io.hpp"
#include "ega/error.hpp"
#include "ega/harness.hpp"

namespace {

using namespace ega;
using harness::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config:
    case ErrorCode::rejected_input:
      return kExitConfig;
    case ErrorCode::numerical_failure:
      return kExitCheckFailed;
    default:
      return kExitIo;
  }
}

struct CommonFlags {
  std::string mode = "ega";
  std::string hardness = "relative";
  std::string encoder = "mlp";
  std::string data;
  std::vector<std::size_t> hidden;
  bool hidden_set = false;
};

void add_run_flags(CLI::App* cmd, RunConfig& config, CommonFlags& flags) {
  cmd->add_option("--tau", config.tau, "softmax temperature")->capture_default_str();
  cmd->add_option("--alpha", config.alpha, "hardness scale")->capture_default_str();
  cmd->add_option("--hardness", flags.hardness, "relative | absolute")
      ->check(CLI::IsMember({"relative", "absolute"}))
      ->capture_default_str();
  cmd->add_option("--mode", flags.mode, "baseline | ega")
      ->check(CLI::IsMember({"baseline", "ega"}))
      ->capture_default_str();
  cmd->add_option("--batch", config.batch, "batch size")->capture_default_str();
  cmd->add_option("--chunk", config.chunk, "gradient-cache chunk size")->capture_default_str();
  cmd->add_option("--steps", config.steps, "training steps")->capture_default_str();
  cmd->add_option("--lr", config.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", config.seed, "run seed")->capture_default_str();
  cmd->add_option("--data", flags.data,
                  "dataset directory, synthetic config JSON file, or inline JSON");
  cmd->add_option("--out", config.out_dir, "output directory");
  cmd->add_option("--hidden", flags.hidden, "hidden layer widths")->delimiter(',');
  cmd->add_option("--dim", config.dim, "embedding dimension")->capture_default_str();
  cmd->add_option("--encoder", flags.encoder, "mlp | table")
      ->check(CLI::IsMember({"mlp", "table"}))
      ->capture_default_str();
  cmd->add_option("--eval-every", config.eval_every, "steps between evaluations")
      ->capture_default_str();
  cmd->add_option("--holdout", config.holdout, "held-out records per class used for evaluation")
      ->capture_default_str();
}

void finish_run_config(RunConfig& config, const CommonFlags& flags) {
  config.mode = parse_loss_mode(flags.mode);
  config.hardness = parse_hardness_mode(flags.hardness);
  config.encoder = flags.encoder == "table" ? EncoderKind::table : EncoderKind::mlp;
  if (!flags.hidden.empty()) config.hidden = flags.hidden;
  if (flags.data.empty()) {
    config.synthetic.seed = config.seed;
  } else {
    harness::apply_data_source(config, flags.data);
  }
  config.validate();
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create '" + dir + "'");
}

void apply_thread_cap() {
  const char* env = std::getenv("EGA_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  require(end != env && *end == '\0' && n >= 1, ErrorCode::invalid_config,
          "EGA_THREADS must be a positive integer");
  omp_set_num_threads(static_cast<int>(n));
}

int cmd_gen_data(const RunConfig& config) {
  require(!config.out_dir.empty(), ErrorCode::invalid_config, "gen-data needs --out");
  require(config.data_dir.empty(), ErrorCode::invalid_config,
          "gen-data takes a synthetic config, not a dataset directory");
  const PairDataset data = generate(config.synthetic);
  write_dataset(config.out_dir, data);
  write_json(config.out_dir + "/dataset.json", config.synthetic);
  std::cout << "wrote " << data.size() << " pairs (" << data.num_classes << " classes, dim "
            << data.queries.cols() << ") to " << config.out_dir << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& config) {
  const auto result = harness::run_train(config);
  std::cout << harness::metrics_csv(result.timeline);
  if (result.events.skipped_steps > 0) {
    std::cerr << "skipped steps: " << result.events.skipped_steps << '\n';
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint,
             const std::string& query_file, const std::string& target_file) {
  harness::MetricsRecord record;
  if (!query_file.empty() || !target_file.empty()) {
    require(!query_file.empty() && !target_file.empty(), ErrorCode::invalid_config,
            "--queries and --targets go together");
    const EmbeddingTable q = read_embeddings(query_file);
    const EmbeddingTable t = read_embeddings(target_file);
    record = harness::evaluate_embeddings(q.values, t.values, config.tau);
  } else {
    require(!checkpoint.empty(), ErrorCode::invalid_config,
            "eval needs --checkpoint or --queries/--targets");
    const EncoderParams params = read_checkpoint(checkpoint);
    const PairDataset data = harness::load_dataset(config);
    const auto split = split_holdout(data, config.holdout);
    require(params.kind == EncoderKind::table || params.input_width() == data.queries.cols(),
            ErrorCode::rejected_input, "checkpoint input width does not match the dataset");
    record = harness::evaluate(params, split.second, config.tau, config.chunk);
  }
  nlohmann::json j = harness::to_json(record);
  j.erase("step");
  j.erase("train_loss");
  std::cout << j.dump(2) << '\n';
  if (!config.out_dir.empty()) {
    ensure_dir(config.out_dir);
    write_json(config.out_dir + "/eval.json", j);
  }
  return kExitOk;
}

int cmd_gradcheck(std::size_t seed_count, bool inject_sign_flip, const std::string& out_dir) {
  harness::GradcheckOptions options;
  options.seeds.clear();
  for (std::size_t s = 0; s < seed_count; ++s) options.seeds.push_back(s);
  if (inject_sign_flip) {
    options.baseline_grads = [](const ProbabilityMatrix& p, const EmbeddingBatch& q,
                                const EmbeddingBatch& t, double tau) {
      GradientBatch g = infonce_grads(p, q, t, tau);
      for (double& v : g.queries.values()) v = -v;
      return g;
    };
  }
  const auto report = harness::run_gradcheck(options);
  for (const auto& c : report.checks) {
    std::cout << (c.passed() ? "PASS " : "FAIL ") << std::left << std::setw(20) << c.family
              << std::setw(34) << c.name << " max_err=" << std::scientific
              << std::setprecision(3) << c.max_error << " tol=" << c.tolerance
              << " n=" << c.instances;
    if (!c.passed()) std::cout << " worst: " << c.worst_case;
    std::cout << '\n';
  }
  std::cout << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " ("
            << report.family_count() << " families)\n";
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_json(out_dir + "/gradcheck.json", report.to_json());
  }
  return report.passed() ? kExitOk : kExitCheckFailed;
}

int cmd_ablate(const RunConfig& config) {
  const auto result = harness::run_ablation(config);
  std::cout << result.csv;
  std::cout << "pbar absolute-vs-relative max diff: " << std::scientific << std::setprecision(3)
            << result.mode_pbar_max_diff << '\n';
  return kExitOk;
}

int cmd_grad(const RunConfig& config, const std::string& query_file,
             const std::string& target_file) {
  require(!query_file.empty() && !target_file.empty(), ErrorCode::invalid_config,
          "grad needs --queries and --targets");
  require(!config.out_dir.empty(), ErrorCode::invalid_config, "grad needs --out");
  const EmbeddingTable q = read_embeddings(query_file);
  const EmbeddingTable t = read_embeddings(target_file);
  const EmbeddingBatch queries(q.values);
  const EmbeddingBatch targets(t.values);
  const PipelineResult res = embedding_gradients(queries, targets, config.step_config());
  ensure_dir(config.out_dir);
  write_embeddings(config.out_dir + "/grad_queries.egae", res.grads.queries, q.labels);
  write_embeddings(config.out_dir + "/grad_targets.egae", res.grads.targets, t.labels);
  write_json(config.out_dir + "/loss.json",
             {{"mean_loss", res.loss.mean}, {"per_query", res.loss.per_query}});
  std::cout << "mean loss " << std::setprecision(17) << res.loss.mean << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive training with explicit gradient amplification"};
  app.require_subcommand(1);

  RunConfig config;
  CommonFlags flags;
  std::string checkpoint, query_file, target_file;
  std::size_t seed_count = 17;
  bool inject_sign_flip = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic pair dataset");
  gen->add_option("--data", flags.data, "synthetic config JSON file or inline JSON");
  gen->add_option("--seed", config.seed, "dataset seed when the config has none");
  gen->add_option("--out", config.out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train an encoder");
  add_run_flags(train, config, flags);

  auto* eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint or embeddings");
  add_run_flags(eval, config, flags);
  eval->add_option("--checkpoint", checkpoint, "encoder checkpoint (.egap)");
  eval->add_option("--queries", query_file, "query embedding file (.egae)");
  eval->add_option("--targets", target_file, "target embedding file (.egae)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference and oracle checks");
  gradcheck->add_option("--seeds", seed_count, "number of seeds")->capture_default_str();
  gradcheck->add_option("--out", config.out_dir, "directory for gradcheck.json");
  gradcheck->add_flag("--inject-sign-flip", inject_sign_flip,
                      "negate the baseline query gradient (mutation fixture)");

  auto* ablate = app.add_subcommand("ablate", "baseline / ega+absolute / ega+relative");
  add_run_flags(ablate, config, flags);

  auto* grad = app.add_subcommand("grad", "loss gradients for precomputed embeddings");
  add_run_flags(grad, config, flags);
  grad->add_option("--queries", query_file, "query embedding file (.egae)");
  grad->add_option("--targets", target_file, "target embedding file (.egae)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    apply_thread_cap();
    if (*gradcheck) return cmd_gradcheck(seed_count, inject_sign_flip, config.out_dir);
    finish_run_config(config, flags);
    if (*gen) return cmd_gen_data(config);
    if (*train) return cmd_train(config);
    if (*eval) return cmd_eval(config, checkpoint, query_file, target_file);
    if (*ablate) return cmd_ablate(config);
    if (*grad) return cmd_grad(config, query_file, target_file);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (invalid configuration): " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitConfig;
}
