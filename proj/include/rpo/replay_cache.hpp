#pragma once

// Experience cache pool: one stored answer per question, initialized by
// sampling the starting policy once per question, read during rollout as a
// truncation source, and replaced epsilon-greedily after each optimize phase.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpo/policy.hpp"
#include "rpo/rng.hpp"
#include "rpo/rollout_group.hpp"
#include "rpo/task_env.hpp"

namespace rpo {

struct CacheEntry {
  int question_id = 0;
  std::vector<Token> answer;
  double reward_at_insert = 0.0;
  int64_t step_inserted = 0;
};

enum class TruncMode { fixed, half_min, full_min };

struct TruncationPolicy {
  TruncMode mode = TruncMode::half_min;
  int L_fixed = 0;
};

std::string to_string(TruncMode mode);
TruncMode trunc_mode_from_string(const std::string& s);

struct PrefixDraw {
  std::vector<Token> prefix;
  int m = 0;
};

// L resolved per mode (fixed / floor(min/2) / min), clamped to the answer
// length; m ~ U{0..L}; prefix = answer minus its last m tokens.
PrefixDraw sample_prefix(std::span<const Token> answer,
                         const TruncationPolicy& trunc,
                         std::optional<std::span<const int>> group_lengths,
                         Rng& rng);

class ReplayCache {
 public:
  size_t size() const { return entries_.size(); }
  bool contains(int question_id) const;
  const CacheEntry& entry(int question_id) const;
  const std::map<int, CacheEntry>& entries() const { return entries_; }

  // Throws on a missing id (dataset/cache mismatch).
  const std::vector<Token>& retrieve(int question_id) const;

  void insert(CacheEntry entry);

  // Epsilon-greedy replacement: u ~ (0,1]; u <= epsilon picks the
  // argmax-shaped-reward response (ties to lowest index), otherwise a uniform
  // pick among the other G-1. With guard on, a selected response only
  // displaces the incumbent when its base reward is >= the incumbent's
  // recorded base reward.
  void update(int question_id, const RolloutGroup& group, double epsilon,
              bool guard, int64_t step, Rng& rng);

  void save(const std::string& path) const;
  static ReplayCache load(const std::string& path);

 private:
  std::map<int, CacheEntry> entries_;
};

struct InitCacheConfig {
  double temperature = 0.7;
  int max_gen_len = 64;
  uint64_t seed = 0;
};

// One sample per question from the initial policy (full path, no prefix).
ReplayCache init_cache(std::span<const TaskInstance> dataset,
                       const NgramPolicy& policy, const InitCacheConfig& cfg);

}  // namespace rpo
