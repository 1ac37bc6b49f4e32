#pragma once

// Training loop: snapshot the behavior policy, roll out G responses per
// question (full-path, or continuing a truncated cache prefix in RPO modes),
// assemble the clipped group-relative objective with a KL penalty to the
// fixed initial reference, ascend its exact gradient, then update the cache.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpo/metrics.hpp"
#include "rpo/policy.hpp"
#include "rpo/replay_cache.hpp"
#include "rpo/reward_shaping.hpp"
#include "rpo/rng.hpp"
#include "rpo/rollout_group.hpp"
#include "rpo/task_env.hpp"

namespace rpo {

enum class TrainMode { grpo, grpo_rpo, dapo, dapo_rpo };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);
bool uses_cache(TrainMode mode);
bool uses_dapo_filter(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::grpo;
  int group_size = 6;
  double clip_eps_low = 0.2;
  double clip_eps_high = 0.2;
  double beta = 0.01;
  double lr = 0.1;
  double temperature = 0.7;
  int max_gen_len = 64;
  int epochs = 1;
  int batch_size = 0;  // 0 = whole dataset per step
  int inner_epochs = 1;
  TruncationPolicy trunc;
  double epsilon = 0.1;
  bool cache_guard = true;
  ShapingConfig shaping;
  bool per_response_m = false;
  bool kl_per_token = false;
  uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct LossBreakdown {
  double objective = 0.0;  // maximized: surrogate - beta * KL
  double surrogate = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  int64_t decode_tokens = 0;
};

// Objective gradient (for ascent) and its breakdown over already-rolled-out
// groups. Ratios use the recorded behavior log-probs; only decode tokens
// contribute terms, prefix tokens only condition contexts.
std::pair<GradAccumulator, LossBreakdown> compute_loss_grad(
    std::span<const RolloutGroup> groups, const NgramPolicy& policy,
    const NgramPolicy& ref, const TrainConfig& cfg);

std::vector<RolloutGroup> dapo_filter(std::vector<RolloutGroup> groups);

class Trainer {
 public:
  Trainer(std::vector<TaskInstance> dataset, NgramPolicy policy,
          TrainConfig cfg, std::optional<ReplayCache> cache);

  // One batch: rollout, inner_epochs optimize passes, cache update.
  MetricsRecord train_step();

  int64_t step_count() const { return step_count_; }
  int epoch() const;
  int steps_per_epoch() const;
  int64_t total_steps() const;
  int64_t total_decode_tokens() const { return total_decode_tokens_; }

  const NgramPolicy& policy() const { return policy_; }
  const NgramPolicy& reference() const { return reference_; }
  const ReplayCache& cache() const;
  const std::vector<TaskInstance>& dataset() const { return dataset_; }

  RolloutGroup rollout_group(const TaskInstance& question,
                             const NgramPolicy& behavior, Rng& rng);

 private:
  std::vector<TaskInstance> dataset_;
  NgramPolicy policy_;
  NgramPolicy reference_;
  TrainConfig cfg_;
  std::optional<ReplayCache> cache_;
  Rng rng_;
  int64_t step_count_ = 0;
  int64_t total_decode_tokens_ = 0;
  std::map<int, std::vector<int>> last_group_lengths_;
};

// Adds boost to the logit of every reference-trace token at its own context,
// for each instance: a supervised warm start toward competent traces.
void warmstart_from_references(NgramPolicy& policy,
                               std::span<const TaskInstance> dataset,
                               double boost);

}  // namespace rpo
