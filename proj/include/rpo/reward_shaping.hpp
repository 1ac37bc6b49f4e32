#pragma once

// Length-aware reward shaping and group-relative advantages. A correct
// response's reward is scaled by a logistic in (group mean length - its own
// length) and clipped to [m, M]; zero rewards pass through untouched so wrong
// answers stay distinguishable from long correct ones.

#include <span>
#include <vector>

#include "rpo/task_env.hpp"

namespace rpo {

struct ShapingConfig {
  double alpha = 0.01;
  double m = 0.5;
  double M = 1.0;
  bool enabled = true;
};

void validate(const ShapingConfig& cfg);

double shape_reward(double r, int len_o, double ell_ref,
                    const ShapingConfig& cfg);

double ell_ref(std::span<const Response> group);

struct AdvantageResult {
  std::vector<double> advantages;
  bool degenerate = false;
};

// (R_i - mean) / population std; groups with std < 1e-12 are degenerate and
// get all-zero advantages. Requires G >= 2.
AdvantageResult group_advantages(std::span<const double> rewards);

}  // namespace rpo
