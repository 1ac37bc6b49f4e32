#pragma once

// Experiment layer: config assembly, seeded end-to-end runs, evaluation,
// the prefix-accuracy, gradient-variance, and gradient-MSE probes, and
// parameter sweeps.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpo/config.hpp"
#include "rpo/metrics.hpp"
#include "rpo/policy.hpp"
#include "rpo/replay_cache.hpp"
#include "rpo/stats.hpp"
#include "rpo/task_env.hpp"
#include "rpo/trainer.hpp"

namespace rpo {

struct RunConfig {
  TrainConfig train;
  int dataset_n = 48;
  int dataset_p = 10;
  int dataset_k_min = 2;
  int dataset_k_max = 2;
  uint64_t dataset_seed = 1;
  int policy_order = 3;
  double warmstart_boost = 0.0;
};

// Reads every known key and rejects leftovers.
RunConfig run_config_from(const Config& cfg);

std::vector<TaskInstance> build_dataset(const RunConfig& rc);
NgramPolicy build_policy(const RunConfig& rc,
                         std::span<const TaskInstance> dataset);

struct TrainRunResult {
  std::string metrics_path;
  std::string checkpoint_path;
  std::string cache_path;  // empty for full-path modes
  double final_accuracy = 0.0;
  double mean_decode_tokens = 0.0;
  double mean_response_len = 0.0;
  int64_t steps = 0;
};

TrainRunResult run_train(const Config& cfg, const std::string& out_dir,
                         const std::optional<std::string>& cache_path = {});

void run_init_cache(const Config& cfg, const std::string& out_path,
                    const std::optional<std::string>& checkpoint_path = {});

EvalReport evaluate(const NgramPolicy& policy,
                    std::span<const TaskInstance> dataset, int n_samples,
                    double temperature, int max_gen_len, uint64_t seed);

struct PrefixProbePoint {
  int prefix_len = 0;
  double accuracy = 0.0;
  bool clamped = false;
};

struct PrefixProbeResult {
  std::vector<PrefixProbePoint> points;
  double spearman_rho = 0.0;
  double p_value = 1.0;
};

PrefixProbeResult probe_prefix(const NgramPolicy& policy,
                               std::span<const TaskInstance> dataset,
                               std::span<const int> prefix_lengths,
                               int samples_per_point, double temperature,
                               int max_gen_len, uint64_t seed);

struct VarianceProbeResult {
  std::vector<double> grad_norms_rpo;
  std::vector<double> grad_norms_full;
  double var_rpo = 0.0;
  double var_full = 0.0;
  double ratio = 0.0;
  stats::BootstrapInterval ci{0.0, 0.0};
};

// Matched-seed gradient-norm variance, grpo_rpo vs grpo, from the same
// initial policy and dataset. lr_override pins the policy (0 = frozen).
VarianceProbeResult probe_variance(const Config& cfg, int steps,
                                   std::optional<double> lr_override);

struct MseProbeRow {
  double alpha = 0.0;
  double mse = 0.0;
};

struct MseProbeResult {
  std::vector<MseProbeRow> rows;
  // L2 distance between the two half-sample reference means.
  double reference_half_diff = 0.0;
};

MseProbeResult probe_mse(const Config& cfg, std::span<const double> alphas,
                         int reference_samples, int trials);

struct SweepRow {
  int cell = 0;
  std::string params;
  bool ok = false;
  std::string error;
  double final_accuracy = 0.0;
  double mean_decode_tokens = 0.0;
  double mean_response_len = 0.0;
};

std::vector<SweepRow> run_sweep(const Config& cfg, const std::string& out_dir);
void save_sweep_rows(std::span<const SweepRow> rows, const std::string& path);

}  // namespace rpo
