#pragma once

#include <vector>

#include "rpo/task_env.hpp"

namespace rpo {

// G responses to one question sampled from the same behavior snapshot. In RPO
// modes all responses share one cache prefix (one m draw per question per
// step); behavior log-probs cover decode tokens only.
struct RolloutGroup {
  int question_id = 0;
  std::vector<Token> prompt;
  std::vector<Response> responses;
  std::vector<std::vector<double>> behavior_logprobs;
  std::vector<double> raw_rewards;
  std::vector<double> shaped_rewards;
  std::vector<double> advantages;
  double ell_ref = 0.0;
  bool degenerate = false;

  int size() const { return static_cast<int>(responses.size()); }
};

}  // namespace rpo
