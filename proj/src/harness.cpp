#include "rpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rpo {

namespace fs = std::filesystem;

RunConfig run_config_from(const Config& cfg) {
  RunConfig rc;
  rc.train.seed = cfg.get_uint64("seed", 0);
  rc.train.mode = train_mode_from_string(cfg.get_string("mode", "grpo"));
  rc.dataset_n = cfg.get_int("dataset.n", rc.dataset_n);
  rc.dataset_p = cfg.get_int("dataset.p", rc.dataset_p);
  rc.dataset_k_min = cfg.get_int("dataset.k_min", rc.dataset_k_min);
  rc.dataset_k_max = cfg.get_int("dataset.k_max", rc.dataset_k_max);
  rc.dataset_seed = cfg.get_uint64("dataset.seed", rc.dataset_seed);
  rc.policy_order = cfg.get_int("policy.order", rc.policy_order);
  rc.warmstart_boost = cfg.get_double("warmstart.boost", 0.0);

  TrainConfig& t = rc.train;
  t.group_size = cfg.get_int("train.group_size", t.group_size);
  t.lr = cfg.get_double("train.lr", t.lr);
  t.beta = cfg.get_double("train.beta", t.beta);
  t.clip_eps_low = cfg.get_double("train.clip_eps_low", t.clip_eps_low);
  t.clip_eps_high = cfg.get_double("train.clip_eps_high", t.clip_eps_high);
  t.temperature = cfg.get_double("train.temperature", t.temperature);
  t.max_gen_len = cfg.get_int("train.max_gen_len", t.max_gen_len);
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.inner_epochs = cfg.get_int("train.inner_epochs", t.inner_epochs);
  t.trunc.mode = trunc_mode_from_string(
      cfg.get_string("trunc.mode", to_string(t.trunc.mode)));
  t.trunc.L_fixed = cfg.get_int("trunc.L", t.trunc.L_fixed);
  t.epsilon = cfg.get_double("cache.epsilon", t.epsilon);
  t.cache_guard = cfg.get_bool("cache.guard", t.cache_guard);
  t.shaping.enabled = cfg.get_bool("shaping.enabled", t.shaping.enabled);
  t.shaping.alpha = cfg.get_double("shaping.alpha", t.shaping.alpha);
  t.shaping.m = cfg.get_double("shaping.m", t.shaping.m);
  t.shaping.M = cfg.get_double("shaping.M", t.shaping.M);
  t.per_response_m = cfg.get_bool("rollout.per_response_m", t.per_response_m);
  t.kl_per_token = cfg.get_bool("kl.per_token", t.kl_per_token);

  // Sweep grids are legal in any config; only the sweep command acts on them.
  cfg.get_list("sweep.L");
  cfg.get_list("sweep.alpha");
  cfg.get_list("sweep.epsilon");

  cfg.check_fully_consumed();
  validate(rc.train);
  if (rc.dataset_p < 2 || rc.dataset_p > 10) {
    throw std::runtime_error("dataset.p must be in [2, 10]");
  }
  return rc;
}

std::vector<TaskInstance> build_dataset(const RunConfig& rc) {
  return generate_dataset(rc.dataset_seed, rc.dataset_n, rc.dataset_p,
                          rc.dataset_k_min, rc.dataset_k_max);
}

NgramPolicy build_policy(const RunConfig& rc,
                         std::span<const TaskInstance> dataset) {
  Vocab vocab{.modulus = rc.dataset_p};
  NgramPolicy policy(rc.policy_order, vocab.size());
  warmstart_from_references(policy, dataset, rc.warmstart_boost);
  return policy;
}

TrainRunResult run_train(const Config& cfg, const std::string& out_dir,
                         const std::optional<std::string>& cache_path) {
  RunConfig rc = run_config_from(cfg);
  fs::create_directories(out_dir);
  std::vector<TaskInstance> dataset = build_dataset(rc);
  save_dataset((fs::path(out_dir) / "dataset.tsv").string(), dataset);
  NgramPolicy policy = build_policy(rc, dataset);

  std::optional<ReplayCache> cache;
  if (uses_cache(rc.train.mode)) {
    if (cache_path) {
      cache = ReplayCache::load(*cache_path);
    } else {
      cache = init_cache(dataset, policy,
                         InitCacheConfig{.temperature = rc.train.temperature,
                                         .max_gen_len = rc.train.max_gen_len,
                                         .seed = rc.train.seed});
    }
  }

  Trainer trainer(std::move(dataset), std::move(policy), rc.train,
                  std::move(cache));
  TrainRunResult result;
  result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  MetricsWriter writer(result.metrics_path);
  double len_sum = 0.0;
  double decode_sum = 0.0;
  int64_t samples = 0;
  MetricsRecord last;
  for (int64_t s = 0; s < trainer.total_steps(); ++s) {
    last = trainer.train_step();
    writer.write(last);
    len_sum += last.mean_response_len * static_cast<double>(last.samples);
    decode_sum += last.mean_decode_tokens * static_cast<double>(last.samples);
    samples += last.samples;
  }
  writer.flush();

  result.checkpoint_path = (fs::path(out_dir) / "policy.ckpt").string();
  trainer.policy().save(result.checkpoint_path);
  if (uses_cache(rc.train.mode)) {
    result.cache_path = (fs::path(out_dir) / "cache.rpo").string();
    trainer.cache().save(result.cache_path);
  }
  result.final_accuracy = last.accuracy;
  result.mean_decode_tokens = decode_sum / static_cast<double>(samples);
  result.mean_response_len = len_sum / static_cast<double>(samples);
  result.steps = trainer.step_count();
  return result;
}

void run_init_cache(const Config& cfg, const std::string& out_path,
                    const std::optional<std::string>& checkpoint_path) {
  RunConfig rc = run_config_from(cfg);
  std::vector<TaskInstance> dataset = build_dataset(rc);
  NgramPolicy policy = checkpoint_path ? NgramPolicy::load(*checkpoint_path)
                                       : build_policy(rc, dataset);
  ReplayCache cache =
      init_cache(dataset, policy,
                 InitCacheConfig{.temperature = rc.train.temperature,
                                 .max_gen_len = rc.train.max_gen_len,
                                 .seed = rc.train.seed});
  cache.save(out_path);
}

EvalReport evaluate(const NgramPolicy& policy,
                    std::span<const TaskInstance> dataset, int n_samples,
                    double temperature, int max_gen_len, uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("eval needs n_samples >= 1");
  if (dataset.empty()) throw std::invalid_argument("eval needs a dataset");
  Rng rng(derive_seed(seed, 0xE7A1E7A1ULL));
  EvalReport report;
  report.n_samples = n_samples;
  double len_sum = 0.0;
  for (const TaskInstance& inst : dataset) {
    std::vector<int> rewards;
    rewards.reserve(n_samples);
    for (int s = 0; s < n_samples; ++s) {
      SampleResult sr =
          policy.sample(inst.prompt, temperature, max_gen_len, rng);
      Response resp;
      resp.tokens = std::move(sr.tokens);
      resp.prefix_len = 0;
      resp.decode_len = resp.total_len();
      resp.terminated = sr.terminated;
      len_sum += resp.total_len();
      rewards.push_back(verify(inst, resp));
    }
    report.per_question.push_back(std::move(rewards));
  }
  report.pass_at.resize(n_samples, 0.0);
  for (int n = 1; n <= n_samples; ++n) {
    int hits = 0;
    for (const std::vector<int>& rewards : report.per_question) {
      bool any = false;
      for (int s = 0; s < n; ++s) any = any || rewards[s] == 1;
      hits += any ? 1 : 0;
    }
    report.pass_at[n - 1] =
        static_cast<double>(hits) / static_cast<double>(dataset.size());
  }
  report.accuracy = report.pass_at[0];
  report.mean_length =
      len_sum / (static_cast<double>(dataset.size()) * n_samples);
  return report;
}

PrefixProbeResult probe_prefix(const NgramPolicy& policy,
                               std::span<const TaskInstance> dataset,
                               std::span<const int> prefix_lengths,
                               int samples_per_point, double temperature,
                               int max_gen_len, uint64_t seed) {
  if (dataset.empty() || prefix_lengths.empty() || samples_per_point < 1) {
    throw std::invalid_argument("probe_prefix: bad arguments");
  }
  Rng rng(derive_seed(seed, 0x9F12E7F1ULL));
  PrefixProbeResult result;
  for (int lp : prefix_lengths) {
    if (lp < 0) throw std::invalid_argument("negative prefix length");
    PrefixProbePoint point;
    point.prefix_len = lp;
    int64_t hits = 0;
    int64_t total = 0;
    for (const TaskInstance& inst : dataset) {
      Response ref = reference_trace(inst);
      int take = lp;
      if (take > ref.total_len()) {
        take = ref.total_len();
        point.clamped = true;
      }
      std::vector<Token> prefix(ref.tokens.begin(), ref.tokens.begin() + take);
      for (int s = 0; s < samples_per_point; ++s) {
        Response resp;
        resp.tokens = prefix;
        resp.prefix_len = take;
        bool done = take > 0 && prefix.back() == Vocab::kEos;
        int max_new = max_gen_len - take;
        if (!done && max_new >= 1) {
          std::vector<Token> seq = inst.prompt;
          seq.insert(seq.end(), prefix.begin(), prefix.end());
          SampleResult sr = policy.sample(seq, temperature, max_new, rng);
          resp.tokens.insert(resp.tokens.end(), sr.tokens.begin(),
                             sr.tokens.end());
          resp.decode_len = static_cast<int>(sr.tokens.size());
          resp.terminated = sr.terminated;
        } else {
          resp.terminated = done;
        }
        hits += verify(inst, resp);
        ++total;
      }
    }
    point.accuracy = static_cast<double>(hits) / static_cast<double>(total);
    result.points.push_back(point);
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (const PrefixProbePoint& p : result.points) {
    xs.push_back(static_cast<double>(p.prefix_len));
    ys.push_back(p.accuracy);
  }
  result.spearman_rho = stats::spearman_rho(xs, ys);
  result.p_value = stats::spearman_pvalue_greater(
      xs, ys, 20000, derive_seed(seed, 0x5EA2AA17ULL));
  return result;
}

VarianceProbeResult probe_variance(const Config& cfg, int steps,
                                   std::optional<double> lr_override) {
  if (steps < 2) throw std::invalid_argument("probe_variance needs steps >= 2");
  RunConfig rc = run_config_from(cfg);
  if (lr_override) rc.train.lr = *lr_override;
  std::vector<TaskInstance> dataset = build_dataset(rc);
  NgramPolicy policy = build_policy(rc, dataset);

  auto collect = [&](TrainMode mode) {
    TrainConfig tc = rc.train;
    tc.mode = mode;
    std::optional<ReplayCache> cache;
    if (uses_cache(mode)) {
      cache = init_cache(dataset, policy,
                         InitCacheConfig{.temperature = tc.temperature,
                                         .max_gen_len = tc.max_gen_len,
                                         .seed = tc.seed});
    }
    Trainer trainer(dataset, policy.snapshot(), tc, std::move(cache));
    std::vector<double> norms;
    norms.reserve(steps);
    for (int s = 0; s < steps; ++s) {
      norms.push_back(trainer.train_step().grad_norm);
    }
    return norms;
  };

  VarianceProbeResult result;
  result.grad_norms_full = collect(TrainMode::grpo);
  result.grad_norms_rpo = collect(TrainMode::grpo_rpo);
  result.var_full = stats::sample_variance(result.grad_norms_full);
  result.var_rpo = stats::sample_variance(result.grad_norms_rpo);
  if (result.var_full == 0.0) {
    result.ratio = result.var_rpo == 0.0
                       ? 1.0
                       : std::numeric_limits<double>::infinity();
  } else {
    result.ratio = result.var_rpo / result.var_full;
  }
  result.ci = stats::bootstrap_variance_ratio_ci(
      result.grad_norms_rpo, result.grad_norms_full, 2000, 0.95,
      derive_seed(rc.train.seed, 0xB007B007ULL));
  return result;
}

MseProbeResult probe_mse(const Config& cfg, std::span<const double> alphas,
                         int reference_samples, int trials) {
  if (alphas.empty() || reference_samples < 2 || trials < 1) {
    throw std::invalid_argument("probe_mse: bad arguments");
  }
  RunConfig rc = run_config_from(cfg);
  std::vector<TaskInstance> dataset = build_dataset(rc);
  NgramPolicy policy = build_policy(rc, dataset);
  int n = static_cast<int>(dataset.size());

  TrainConfig ref_cfg = rc.train;
  ref_cfg.mode = TrainMode::grpo;
  ref_cfg.beta = 0.0;
  ref_cfg.shaping.enabled = false;
  Trainer ref_trainer(dataset, policy.snapshot(), ref_cfg, std::nullopt);

  GradAccumulator reference(policy.vocab_size());
  GradAccumulator first_half(policy.vocab_size());
  GradAccumulator second_half(policy.vocab_size());
  Rng ref_rng(derive_seed(rc.train.seed, 0x4EF04EF0ULL));
  for (int t = 0; t < reference_samples; ++t) {
    std::vector<RolloutGroup> groups;
    groups.reserve(n);
    for (const TaskInstance& inst : dataset) {
      groups.push_back(ref_trainer.rollout_group(inst, policy, ref_rng));
    }
    auto [grad, lb] = compute_loss_grad(groups, policy, policy, ref_cfg);
    double w = 1.0 / static_cast<double>(reference_samples);
    reference.add_scaled(grad, w);
    if (t < reference_samples / 2) {
      first_half.add_scaled(grad, 2.0 * w);
    } else {
      second_half.add_scaled(grad, 2.0 * w);
    }
  }

  MseProbeResult result;
  result.reference_half_diff =
      std::sqrt(first_half.squared_distance(second_half));

  ReplayCache cache =
      init_cache(dataset, policy,
                 InitCacheConfig{.temperature = rc.train.temperature,
                                 .max_gen_len = rc.train.max_gen_len,
                                 .seed = rc.train.seed});
  for (double alpha : alphas) {
    TrainConfig est_cfg = rc.train;
    est_cfg.mode = TrainMode::grpo_rpo;
    est_cfg.beta = 0.0;
    est_cfg.shaping.enabled = alpha > 0.0;
    est_cfg.shaping.alpha = alpha;
    Trainer est_trainer(dataset, policy.snapshot(), est_cfg, cache);
    Rng est_rng(derive_seed(rc.train.seed, 0x0E570E57ULL));
    double total = 0.0;
    for (int t = 0; t < trials; ++t) {
      const TaskInstance& inst = dataset[t % n];
      RolloutGroup group = est_trainer.rollout_group(inst, policy, est_rng);
      std::vector<RolloutGroup> one;
      one.push_back(std::move(group));
      auto [grad, lb] = compute_loss_grad(one, policy, policy, est_cfg);
      total += grad.squared_distance(reference);
    }
    result.rows.push_back(
        MseProbeRow{alpha, total / static_cast<double>(trials)});
  }
  return result;
}

std::vector<SweepRow> run_sweep(const Config& cfg, const std::string& out_dir) {
  std::vector<std::string> grid_L = cfg.get_list("sweep.L");
  std::vector<std::string> grid_alpha = cfg.get_list("sweep.alpha");
  std::vector<std::string> grid_eps = cfg.get_list("sweep.epsilon");
  if (grid_L.empty() && grid_alpha.empty() && grid_eps.empty()) {
    throw std::runtime_error(
        "sweep requires at least one of sweep.L / sweep.alpha / sweep.epsilon");
  }
  if (grid_L.empty()) grid_L.push_back("");
  if (grid_alpha.empty()) grid_alpha.push_back("");
  if (grid_eps.empty()) grid_eps.push_back("");
  size_t cells = grid_L.size() * grid_alpha.size() * grid_eps.size();
  if (cells > 512) throw std::runtime_error("sweep grid exceeds 512 cells");

  uint64_t base_seed = cfg.get_uint64("seed", 0);
  fs::create_directories(out_dir);
  std::vector<SweepRow> rows;
  int cell = 0;
  for (const std::string& L : grid_L) {
    for (const std::string& alpha : grid_alpha) {
      for (const std::string& eps : grid_eps) {
        Config cell_cfg;
        for (const auto& [k, v] : cfg.values()) {
          if (k.rfind("sweep.", 0) == 0) continue;
          cell_cfg.set(k, v);
        }
        SweepRow row;
        row.cell = cell;
        std::string params;
        if (!L.empty()) {
          if (L == "half_min" || L == "full_min") {
            cell_cfg.set("trunc.mode", L);
          } else {
            cell_cfg.set("trunc.mode", "fixed");
            cell_cfg.set("trunc.L", L);
          }
          params += "L=" + L;
        }
        if (!alpha.empty()) {
          cell_cfg.set("shaping.alpha", alpha);
          if (!params.empty()) params += " ";
          params += "alpha=" + alpha;
        }
        if (!eps.empty()) {
          cell_cfg.set("cache.epsilon", eps);
          if (!params.empty()) params += " ";
          params += "epsilon=" + eps;
        }
        cell_cfg.set("seed",
                     std::to_string(derive_seed(base_seed, cell)));
        row.params = params;
        std::string cell_dir =
            (fs::path(out_dir) / ("cell_" + std::to_string(cell))).string();
        try {
          TrainRunResult r = run_train(cell_cfg, cell_dir);
          row.ok = true;
          row.final_accuracy = r.final_accuracy;
          row.mean_decode_tokens = r.mean_decode_tokens;
          row.mean_response_len = r.mean_response_len;
        } catch (const std::exception& e) {
          row.ok = false;
          row.error = e.what();
        }
        rows.push_back(std::move(row));
        ++cell;
      }
    }
  }
  save_sweep_rows(rows, (fs::path(out_dir) / "sweep.tsv").string());
  return rows;
}

void save_sweep_rows(std::span<const SweepRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "cell\tparams\tstatus\tfinal_accuracy\tmean_decode_tokens\t"
         "mean_response_len\n";
  char buf[64];
  for (const SweepRow& row : rows) {
    out << row.cell << '\t' << row.params << '\t'
        << (row.ok ? "ok" : ("error: " + row.error));
    std::snprintf(buf, sizeof(buf), "%.6g", row.final_accuracy);
    out << '\t' << buf;
    std::snprintf(buf, sizeof(buf), "%.6g", row.mean_decode_tokens);
    out << '\t' << buf;
    std::snprintf(buf, sizeof(buf), "%.6g", row.mean_response_len);
    out << '\t' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace rpo
