#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ega/error.hpp"
#include "ega/harness.hpp"
#include "support.hpp"

namespace ega::harness {
namespace {

RunConfig quick_config() {
  RunConfig c;
  c.synthetic.num_classes = 16;
  c.synthetic.pairs_per_class = 6;
  c.holdout = 2;
  c.batch = 8;
  c.chunk = 4;
  c.steps = 20;
  c.eval_every = 10;
  c.seed = 5;
  return c;
}

double timeline_diff(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b) {
  EXPECT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
    EXPECT_EQ(a[k].step, b[k].step);
    for (auto [x, y] : {std::pair{a[k].mean_loss, b[k].mean_loss},
                        {a[k].retrieval.precision_at_1, b[k].retrieval.precision_at_1},
                        {a[k].retrieval.recall_at_5, b[k].retrieval.recall_at_5},
                        {a[k].retrieval.recall_at_10, b[k].retrieval.recall_at_10},
                        {a[k].retrieval.mean_rank, b[k].retrieval.mean_rank},
                        {a[k].mean_positive_prob, b[k].mean_positive_prob},
                        {a[k].train_loss, b[k].train_loss}}) {
      worst = std::max(worst, std::abs(x - y));
    }
  }
  return worst;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(RunConfig, ValidatesInvariants) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.alpha = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.chunk = c.batch + 1;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.steps = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, DataSourceAcceptsInlineJsonAndInheritsSeed) {
  RunConfig c;
  c.seed = 42;
  apply_data_source(c, R"({"num_classes": 8, "clusters_per_group": 2})");
  EXPECT_EQ(c.synthetic.num_classes, 8u);
  EXPECT_EQ(c.synthetic.clusters_per_group, 2u);
  EXPECT_EQ(c.synthetic.seed, 42u);
  EXPECT_THROW(apply_data_source(c, R"({"bogus": 1})"), Error);
}

TEST(Train, ImprovesOnInitialization) {
  RunConfig c;  // K=64, g=4, m=32, d=16, B=32, 300 steps
  c.eval_every = 300;
  const TrainResult r = run_train(c);
  ASSERT_EQ(r.timeline.size(), 2u);
  EXPECT_GT(r.timeline.back().retrieval.precision_at_1, r.timeline.front().retrieval.precision_at_1);
  EXPECT_EQ(r.events.skipped_steps, 0u);
}

TEST(Train, TimelineFollowsEvalInterval) {
  const TrainResult r = run_train(quick_config());
  ASSERT_EQ(r.timeline.size(), 3u);
  EXPECT_EQ(r.timeline[0].step, 0u);
  EXPECT_EQ(r.timeline[1].step, 10u);
  EXPECT_EQ(r.timeline[2].step, 20u);
  for (const auto& m : r.timeline) {
    EXPECT_GE(m.retrieval.precision_at_1, 0.0);
    EXPECT_LE(m.retrieval.precision_at_1, 1.0);
    EXPECT_LE(m.retrieval.recall_at_5, m.retrieval.recall_at_10);
    EXPECT_GE(m.retrieval.mean_rank, 1.0);
  }
}

TEST(Train, ManifestIsByteIdenticalAcrossRuns) {
  RunConfig c = quick_config();
  c.steps = 1;
  const std::string a = testing::scratch_dir("manifest_a");
  const std::string b = testing::scratch_dir("manifest_b");
  c.out_dir = a;
  run_train(c);
  c.out_dir = b;
  run_train(c);
  const std::string first = slurp(a + "/manifest.json");
  EXPECT_FALSE(first.empty());
  EXPECT_EQ(first, slurp(b + "/manifest.json"));
  EXPECT_EQ(slurp(a + "/metrics.csv"), slurp(b + "/metrics.csv"));
  EXPECT_EQ(slurp(a + "/checkpoint.egap"), slurp(b + "/checkpoint.egap"));
  EXPECT_TRUE(std::filesystem::exists(a + "/timing.json"));
}

TEST(Train, InputsHashTracksConfigAndData) {
  RunConfig c = quick_config();
  c.steps = 1;
  const std::string h1 = run_train(c).manifest["inputs_hash"];
  EXPECT_EQ(h1.size(), 40u);
  c.synthetic.noise = 0.2;
  EXPECT_NE(run_train(c).manifest["inputs_hash"].get<std::string>(), h1);
}

TEST(Train, ZeroAlphaEgaMatchesBaseline) {
  RunConfig e = quick_config();
  e.alpha = 0.0;
  RunConfig base = e;
  base.mode = LossMode::baseline;
  EXPECT_EQ(timeline_diff(run_train(e).timeline, run_train(base).timeline), 0.0);
}

TEST(Train, SeparableTaskSeparatesEveryPair) {
  RunConfig c;
  c.synthetic.num_classes = 8;
  c.synthetic.clusters_per_group = 1;
  c.synthetic.separation = 10.0;
  c.synthetic.noise = 0.1;
  c.synthetic.pairs_per_class = 4;
  c.holdout = 1;
  c.batch = 8;
  c.steps = 100;
  c.eval_every = 100;
  const TrainResult r = run_train(c);
  const PairDataset data = load_dataset(c);
  const Matrix q = embed(r.params, data.queries).matrix();
  const Matrix t = embed(r.params, data.targets).matrix();
  for (std::size_t a = 0; a < data.size(); ++a) {
    double worst_same = 1e300, best_other = -1e300;
    for (std::size_t b = 0; b < data.size(); ++b) {
      const double s = dot(q.row(a), t.row(b));
      if (data.labels[a] == data.labels[b]) {
        worst_same = std::min(worst_same, s);
      } else {
        best_other = std::max(best_other, s);
      }
    }
    EXPECT_GT(worst_same, best_other) << "record " << a;
  }
}

TEST(Train, TableEncoderTrains) {
  RunConfig c = quick_config();
  c.encoder = EncoderKind::table;
  c.steps = 60;
  c.eval_every = 60;
  const TrainResult r = run_train(c);
  EXPECT_EQ(r.params.kind, EncoderKind::table);
  EXPECT_EQ(r.params.widths[0], 32u);
  EXPECT_GT(r.timeline.back().retrieval.precision_at_1, r.timeline.front().retrieval.precision_at_1);
}

TEST(Eval, FoldsAreAveraged) {
  const RunConfig c = quick_config();
  const PairDataset data = load_dataset(c);
  const auto [train, eval] = split_holdout(data, 2);
  const EncoderParams params = initial_params(c, data);
  const MetricsRecord all = evaluate(params, eval, c.tau, c.chunk);
  double p1 = 0.0;
  for (std::size_t f = 0; f < 2; ++f) {
    const Matrix q = embed(params, eval.queries.slice_rows(16 * f, 16 * (f + 1))).matrix();
    const Matrix t = embed(params, eval.targets.slice_rows(16 * f, 16 * (f + 1))).matrix();
    p1 += 0.5 * evaluate_embeddings(q, t, c.tau).retrieval.precision_at_1;
  }
  EXPECT_NEAR(all.retrieval.precision_at_1, p1, 1e-15);
}

TEST(Gradcheck, PassesAndCoversRequiredFamilies) {
  GradcheckOptions options;
  options.seeds = {0, 1, 2};
  const GradcheckReport report = run_gradcheck(options);
  EXPECT_TRUE(report.passed());
  EXPECT_GE(report.family_count(), 6u);
  std::set<std::string> families;
  for (const auto& check : report.checks) {
    families.insert(check.family);
    EXPECT_GT(check.instances, 0u) << check.name;
  }
  for (const char* f : {"softmax", "loss", "baseline_grads", "ega_grads", "normalize_jacobian",
                        "chunk_invariance"}) {
    EXPECT_TRUE(families.count(f)) << f;
  }
  EXPECT_TRUE(report.to_json().contains("checks"));
}

TEST(Gradcheck, DetectsSignFlip) {
  GradcheckOptions options;
  options.seeds = {0, 1};
  options.baseline_grads = [](const ProbabilityMatrix& p, const EmbeddingBatch& q,
                              const EmbeddingBatch& t, double tau) {
    GradientBatch g = infonce_grads(p, q, t, tau);
    for (double& v : g.queries.values()) v = -v;
    return g;
  };
  const GradcheckReport report = run_gradcheck(options);
  EXPECT_FALSE(report.passed());
  bool baseline_failed = false;
  for (const auto& check : report.checks) {
    if (check.family == "baseline_grads" && !check.passed()) baseline_failed = true;
  }
  EXPECT_TRUE(baseline_failed);
}

TEST(Ablation, ZeroAlphaGivesIdenticalRows) {
  RunConfig c = quick_config();
  c.alpha = 0.0;
  const AblationResult r = run_ablation(c);
  ASSERT_EQ(r.variants.size(), 3u);
  EXPECT_EQ(r.variants[0].name, "baseline");
  for (std::size_t v = 1; v < 3; ++v) {
    EXPECT_EQ(timeline_diff(r.variants[v].result.timeline, r.variants[0].result.timeline), 0.0);
  }
}

TEST(Ablation, HardnessModesAgreeAndDifferenceIsReported) {
  RunConfig c = quick_config();
  const std::string out = testing::scratch_dir("ablation");
  c.out_dir = out;
  const AblationResult r = run_ablation(c);
  const auto& absolute = r.variants[1].result.timeline;
  const auto& relative = r.variants[2].result.timeline;
  EXPECT_LE(timeline_diff(absolute, relative), 1e-9);
  EXPECT_LE(r.mode_pbar_max_diff, 1e-12);
  EXPECT_TRUE(r.summary.contains("pbar_absolute_vs_relative_max_diff"));
  EXPECT_EQ(std::count(r.csv.begin(), r.csv.end(), '\n'), 4);
  EXPECT_TRUE(std::filesystem::exists(out + "/ablation.csv"));
  EXPECT_TRUE(std::filesystem::exists(out + "/ablation.json"));
  EXPECT_TRUE(std::filesystem::exists(out + "/baseline/manifest.json"));
}

TEST(ContentHash, MatchesGitBlobHash) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

}  // namespace
}  // namespace ega::harness
