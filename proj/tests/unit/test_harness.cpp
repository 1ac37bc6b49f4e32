#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rpo/harness.hpp"

using namespace rpo;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

Config tiny_train_config() {
  return Config::parse_string(
      "seed = 21\n"
      "mode = grpo\n"
      "dataset.n = 4\n"
      "dataset.p = 5\n"
      "dataset.seed = 77\n"
      "policy.order = 2\n"
      "train.group_size = 4\n"
      "train.max_gen_len = 16\n"
      "train.epochs = 2\n"
      "train.temperature = 1.0\n");
}

}  // namespace

TEST_CASE("run_config_from applies defaults and reads every key") {
  RunConfig rc = run_config_from(Config::parse_string(""));
  CHECK(rc.dataset_n == 48);
  CHECK(rc.dataset_p == 10);
  CHECK(rc.dataset_k_min == 2);
  CHECK(rc.dataset_k_max == 2);
  CHECK(rc.policy_order == 3);
  CHECK(rc.warmstart_boost == 0.0);
  CHECK(rc.train.mode == TrainMode::grpo);
  CHECK(rc.train.group_size == 6);
  CHECK(rc.train.trunc.mode == TruncMode::half_min);

  Config cfg = Config::parse_string(
      "seed = 3\n"
      "mode = dapo_rpo\n"
      "dataset.n = 12\n"
      "dataset.p = 7\n"
      "dataset.k_min = 2\n"
      "dataset.k_max = 4\n"
      "dataset.seed = 9\n"
      "policy.order = 4\n"
      "warmstart.boost = 1.5\n"
      "train.group_size = 8\n"
      "train.lr = 0.05\n"
      "train.beta = 0.02\n"
      "train.clip_eps_low = 0.1\n"
      "train.clip_eps_high = 0.4\n"
      "train.temperature = 0.8\n"
      "train.max_gen_len = 32\n"
      "train.epochs = 3\n"
      "train.batch_size = 6\n"
      "train.inner_epochs = 2\n"
      "trunc.mode = fixed\n"
      "trunc.L = 5\n"
      "cache.epsilon = 0.25\n"
      "cache.guard = false\n"
      "shaping.enabled = true\n"
      "shaping.alpha = 0.02\n"
      "shaping.m = 0.4\n"
      "shaping.M = 0.9\n"
      "rollout.per_response_m = true\n"
      "kl.per_token = true\n"
      "sweep.L = 1,2\n"
      "sweep.alpha = 0.1\n"
      "sweep.epsilon = 0.5\n");
  RunConfig full = run_config_from(cfg);
  CHECK(full.train.mode == TrainMode::dapo_rpo);
  CHECK(full.dataset_n == 12);
  CHECK(full.dataset_p == 7);
  CHECK(full.dataset_k_max == 4);
  CHECK(full.policy_order == 4);
  CHECK(full.warmstart_boost == 1.5);
  CHECK(full.train.group_size == 8);
  CHECK(full.train.lr == 0.05);
  CHECK(full.train.beta == 0.02);
  CHECK(full.train.clip_eps_high == 0.4);
  CHECK(full.train.max_gen_len == 32);
  CHECK(full.train.batch_size == 6);
  CHECK(full.train.inner_epochs == 2);
  CHECK(full.train.trunc.mode == TruncMode::fixed);
  CHECK(full.train.trunc.L_fixed == 5);
  CHECK(full.train.epsilon == 0.25);
  CHECK_FALSE(full.train.cache_guard);
  CHECK(full.train.shaping.alpha == 0.02);
  CHECK(full.train.per_response_m);
  CHECK(full.train.kl_per_token);
}

TEST_CASE("run_config_from rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(
      run_config_from(Config::parse_string("train.learning_rate = 0.1\n")),
      doctest::Contains("unknown config key(s): 'train.learning_rate'"),
      std::runtime_error);
  CHECK_THROWS_WITH_AS(run_config_from(Config::parse_string("dataset.p = 11\n")),
                       doctest::Contains("dataset.p"), std::runtime_error);
  CHECK_THROWS(run_config_from(Config::parse_string("dataset.p = 1\n")));
  CHECK_THROWS(run_config_from(Config::parse_string("mode = sft\n")));
  CHECK_THROWS(run_config_from(Config::parse_string("trunc.mode = minfull\n")));
  CHECK_THROWS(run_config_from(Config::parse_string("train.group_size = 1\n")));
}

TEST_CASE("build helpers honor the run config") {
  Config cfg = Config::parse_string(
      "dataset.n = 6\ndataset.p = 7\ndataset.k_min = 3\ndataset.k_max = 3\n"
      "policy.order = 5\nwarmstart.boost = 2.0\n");
  RunConfig rc = run_config_from(cfg);
  std::vector<TaskInstance> dataset = build_dataset(rc);
  REQUIRE(dataset.size() == 6);
  for (const TaskInstance& inst : dataset) {
    CHECK(inst.modulus == 7);
    CHECK(inst.ops.size() == 3);
  }
  NgramPolicy policy = build_policy(rc, dataset);
  CHECK(policy.order() == 5);
  CHECK(policy.vocab_size() == Vocab{7}.size());
  CHECK(policy.num_contexts() > 0);  // warm start touched reference contexts
}

TEST_CASE("run_train writes the full artifact set") {
  TempDir dir("rpo_harness_train");
  TrainRunResult r = run_train(tiny_train_config(), dir.sub("run"));

  CHECK(r.steps == 2);
  CHECK(r.cache_path.empty());
  CHECK(r.final_accuracy >= 0.0);
  CHECK(r.final_accuracy <= 1.0);
  CHECK(r.mean_response_len >= 1.0);
  CHECK(r.mean_decode_tokens == r.mean_response_len);  // full-path mode

  std::vector<TaskInstance> dataset =
      load_dataset((fs::path(dir.sub("run")) / "dataset.tsv").string());
  CHECK(dataset.size() == 4);

  std::vector<MetricsRecord> metrics = load_metrics(r.metrics_path);
  REQUIRE(metrics.size() == 2);
  CHECK(metrics[0].step == 1);
  CHECK(metrics[1].step == 2);
  CHECK(metrics[0].epoch == 0);
  CHECK(metrics[1].epoch == 1);
  CHECK(metrics[1].accuracy == r.final_accuracy);
  TokenAccounting acc = token_accounting(metrics);
  CHECK(acc.mean_decode_tokens ==
        doctest::Approx(r.mean_decode_tokens).epsilon(1e-12));

  NgramPolicy loaded = NgramPolicy::load(r.checkpoint_path);
  CHECK(loaded.order() == 2);
  CHECK(loaded.step() == 2);
}

TEST_CASE("run_train reruns are byte-identical") {
  TempDir dir("rpo_harness_rerun");
  run_train(tiny_train_config(), dir.sub("a"));
  run_train(tiny_train_config(), dir.sub("b"));
  CHECK(slurp(dir.sub("a") + "/metrics.jsonl") ==
        slurp(dir.sub("b") + "/metrics.jsonl"));
  CHECK(slurp(dir.sub("a") + "/policy.ckpt") ==
        slurp(dir.sub("b") + "/policy.ckpt"));
  CHECK(slurp(dir.sub("a") + "/dataset.tsv") ==
        slurp(dir.sub("b") + "/dataset.tsv"));
}

TEST_CASE("run_train in rpo mode produces and reuses caches") {
  TempDir dir("rpo_harness_rpo");
  Config cfg = tiny_train_config();
  cfg.set("mode", "grpo_rpo");
  TrainRunResult r = run_train(cfg, dir.sub("run"));
  REQUIRE_FALSE(r.cache_path.empty());
  ReplayCache cache = ReplayCache::load(r.cache_path);
  CHECK(cache.size() == 4);
  CHECK(r.mean_decode_tokens <= r.mean_response_len);

  // Seeding the run from a pre-built cache file.
  run_init_cache(cfg, dir.sub("seed.rpo"));
  ReplayCache seeded = ReplayCache::load(dir.sub("seed.rpo"));
  CHECK(seeded.size() == 4);
  TrainRunResult r2 = run_train(cfg, dir.sub("run2"), dir.sub("seed.rpo"));
  CHECK(r2.steps == 2);
  // Same config seeds the same initial cache, so the runs coincide.
  CHECK(slurp(r.metrics_path) == slurp(r2.metrics_path));
}

TEST_CASE("run_init_cache can start from a checkpoint") {
  TempDir dir("rpo_harness_initcache");
  Config cfg = tiny_train_config();
  RunConfig rc = run_config_from(cfg);
  std::vector<TaskInstance> dataset = build_dataset(rc);

  NgramPolicy trained(2, Vocab{5}.size());
  warmstart_from_references(trained, dataset, 50.0);
  trained.save(dir.sub("warm.ckpt"));

  run_init_cache(cfg, dir.sub("warm.rpo"), dir.sub("warm.ckpt"));
  ReplayCache cache = ReplayCache::load(dir.sub("warm.rpo"));
  REQUIRE(cache.size() == dataset.size());
  ReplayCache direct =
      init_cache(dataset, trained,
                 InitCacheConfig{.temperature = 1.0, .max_gen_len = 16,
                                 .seed = 21});
  for (const TaskInstance& inst : dataset) {
    CHECK(cache.entry(inst.id).answer == direct.entry(inst.id).answer);
  }
}

TEST_CASE("evaluate reports monotone pass@N") {
  std::vector<TaskInstance> dataset = generate_dataset(81, 6, 7, 2, 2);
  NgramPolicy uniform(2, Vocab{7}.size());
  EvalReport rep = evaluate(uniform, dataset, 5, 1.0, 16, 13);
  CHECK(rep.n_samples == 5);
  REQUIRE(rep.per_question.size() == 6);
  REQUIRE(rep.pass_at.size() == 5);
  for (const auto& rewards : rep.per_question) {
    CHECK(rewards.size() == 5);
    for (int r : rewards) CHECK((r == 0 || r == 1));
  }
  CHECK(rep.accuracy == rep.pass_at[0]);
  for (size_t i = 1; i < rep.pass_at.size(); ++i) {
    CHECK(rep.pass_at[i] >= rep.pass_at[i - 1]);
  }
  CHECK(rep.mean_length >= 1.0);
  CHECK(rep.mean_length <= 16.0);

  EvalReport again = evaluate(uniform, dataset, 5, 1.0, 16, 13);
  CHECK(again.per_question == rep.per_question);

  CHECK_THROWS(evaluate(uniform, dataset, 0, 1.0, 16, 13));
  std::vector<TaskInstance> empty;
  CHECK_THROWS(evaluate(uniform, empty, 1, 1.0, 16, 13));
}

TEST_CASE("evaluate gives a perfect policy a perfect score") {
  std::vector<TaskInstance> dataset = generate_dataset(82, 5, 5, 2, 2);
  NgramPolicy perfect(8, Vocab{5}.size());
  warmstart_from_references(perfect, dataset, 60.0);
  EvalReport rep = evaluate(perfect, dataset, 3, 0.7, 32, 4);
  CHECK(rep.accuracy == 1.0);
  for (double p : rep.pass_at) CHECK(p == 1.0);
  CHECK(rep.mean_length ==
        doctest::Approx(reference_trace(dataset[0]).total_len()).epsilon(0.5));
}

TEST_CASE("prefix probe hits exactly 1.0 on full reference prefixes") {
  std::vector<TaskInstance> dataset = generate_dataset(83, 6, 7, 2, 3);
  NgramPolicy uniform(2, Vocab{7}.size());
  std::vector<int> lengths = {0, 2, 4, 999};
  PrefixProbeResult res = probe_prefix(uniform, dataset, lengths, 8, 1.0, 24, 5);
  REQUIRE(res.points.size() == 4);
  for (size_t i = 0; i < lengths.size(); ++i) {
    CHECK(res.points[i].prefix_len == lengths[i]);
    CHECK(res.points[i].accuracy >= 0.0);
    CHECK(res.points[i].accuracy <= 1.0);
  }
  CHECK_FALSE(res.points[0].clamped);
  CHECK_FALSE(res.points[1].clamped);
  CHECK(res.points[3].clamped);
  CHECK(res.points[3].accuracy == 1.0);
  CHECK(res.points[0].accuracy < 0.5);  // uniform decoding almost never solves
  CHECK(res.spearman_rho > 0.0);
  CHECK(res.p_value <= 1.0);
  CHECK(res.p_value > 0.0);

  CHECK_THROWS(probe_prefix(uniform, dataset, std::vector<int>{}, 8, 1.0, 24, 5));
  std::vector<int> negative = {-1};
  CHECK_THROWS(probe_prefix(uniform, dataset, negative, 8, 1.0, 24, 5));
  CHECK_THROWS(probe_prefix(uniform, dataset, lengths, 0, 1.0, 24, 5));
}

TEST_CASE("variance probe compares matched runs") {
  Config cfg = tiny_train_config();
  VarianceProbeResult res = probe_variance(cfg, 8, 0.0);
  CHECK(res.grad_norms_rpo.size() == 8);
  CHECK(res.grad_norms_full.size() == 8);
  for (double g : res.grad_norms_rpo) CHECK(std::isfinite(g));
  for (double g : res.grad_norms_full) CHECK(std::isfinite(g));
  CHECK(res.var_rpo >= 0.0);
  CHECK(res.var_full >= 0.0);
  CHECK(res.ratio >= 0.0);
  CHECK(res.ci.lo <= res.ci.hi);

  VarianceProbeResult again = probe_variance(cfg, 8, 0.0);
  CHECK(again.grad_norms_rpo == res.grad_norms_rpo);
  CHECK(again.grad_norms_full == res.grad_norms_full);
  CHECK(again.ci.lo == res.ci.lo);

  CHECK_THROWS(probe_variance(cfg, 1, 0.0));
}

TEST_CASE("mse probe sharpens with more reference samples") {
  Config cfg = tiny_train_config();
  std::vector<double> alphas = {0.0, 0.01};
  MseProbeResult res = probe_mse(cfg, alphas, 8, 4);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].alpha == 0.0);
  CHECK(res.rows[1].alpha == 0.01);
  for (const MseProbeRow& row : res.rows) {
    CHECK(std::isfinite(row.mse));
    CHECK(row.mse >= 0.0);
  }
  CHECK(res.reference_half_diff >= 0.0);

  MseProbeResult again = probe_mse(cfg, alphas, 8, 4);
  CHECK(again.rows[0].mse == res.rows[0].mse);
  CHECK(again.rows[1].mse == res.rows[1].mse);
  CHECK(again.reference_half_diff == res.reference_half_diff);

  MseProbeResult sharper = probe_mse(cfg, alphas, 32, 4);
  CHECK(sharper.reference_half_diff < res.reference_half_diff);

  CHECK_THROWS(probe_mse(cfg, std::vector<double>{}, 8, 4));
  CHECK_THROWS(probe_mse(cfg, alphas, 1, 4));
  CHECK_THROWS(probe_mse(cfg, alphas, 8, 0));
}

TEST_CASE("sweep walks the grid and keeps going after failures") {
  TempDir dir("rpo_harness_sweep");
  Config cfg = tiny_train_config();
  cfg.set("mode", "grpo_rpo");
  cfg.set("sweep.L", "2, half_min");
  cfg.set("sweep.alpha", "0.005, 0.02");
  std::vector<SweepRow> rows = run_sweep(cfg, dir.sub("grid"));
  REQUIRE(rows.size() == 4);
  for (const SweepRow& row : rows) {
    CAPTURE(row.params);
    CHECK(row.ok);
    CHECK(row.error.empty());
    CHECK(fs::exists(fs::path(dir.sub("grid")) /
                     ("cell_" + std::to_string(row.cell)) / "metrics.jsonl"));
  }
  CHECK(rows[0].params == "L=2 alpha=0.005");
  CHECK(rows[1].params == "L=2 alpha=0.02");
  CHECK(rows[2].params == "L=half_min alpha=0.005");
  CHECK(rows[3].params == "L=half_min alpha=0.02");

  std::string tsv = slurp(dir.sub("grid") + "/sweep.tsv");
  CHECK(tsv.find("cell\tparams\tstatus") == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);

  // A bad alpha fails its own cell only.
  Config mixed = tiny_train_config();
  mixed.set("sweep.alpha", "0.01, -1");
  std::vector<SweepRow> partial = run_sweep(mixed, dir.sub("partial"));
  REQUIRE(partial.size() == 2);
  CHECK(partial[0].ok);
  CHECK_FALSE(partial[1].ok);
  CHECK_FALSE(partial[1].error.empty());

  CHECK_THROWS(run_sweep(tiny_train_config(), dir.sub("nogrid")));
}

TEST_CASE("a single-cell sweep reproduces a plain run") {
  TempDir dir("rpo_harness_sweep_eq");
  Config cfg = tiny_train_config();
  cfg.set("sweep.alpha", "0.02");
  std::vector<SweepRow> rows = run_sweep(cfg, dir.sub("grid"));
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].ok);

  Config direct = tiny_train_config();
  direct.set("shaping.alpha", "0.02");
  direct.set("seed", std::to_string(derive_seed(21, 0)));
  TrainRunResult r = run_train(direct, dir.sub("direct"));
  CHECK(rows[0].final_accuracy == r.final_accuracy);
  CHECK(slurp(dir.sub("grid") + "/cell_0/metrics.jsonl") ==
        slurp(dir.sub("direct") + "/metrics.jsonl"));
}
