#include "rpo/reward_shaping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rpo {

void validate(const ShapingConfig& cfg) {
  if (cfg.alpha < 0.0) throw std::invalid_argument("shaping.alpha must be >= 0");
  if (!(cfg.m < cfg.M)) throw std::invalid_argument("shaping requires m < M");
}

double shape_reward(double r, int len_o, double ell_ref,
                    const ShapingConfig& cfg) {
  if (len_o < 1) throw std::invalid_argument("response length must be >= 1");
  if (!(ell_ref > 0.0)) throw std::invalid_argument("ell_ref must be > 0");
  if (!cfg.enabled || r == 0.0) return r;
  double z = cfg.alpha * (ell_ref - static_cast<double>(len_o));
  double sig = 1.0 / (1.0 + std::exp(-z));
  return std::clamp(r * sig, cfg.m, cfg.M);
}

double ell_ref(std::span<const Response> group) {
  if (group.empty()) throw std::invalid_argument("ell_ref of empty group");
  double sum = 0.0;
  for (const Response& r : group) sum += r.total_len();
  return sum / static_cast<double>(group.size());
}

AdvantageResult group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("group_advantages requires G >= 2");
  }
  double g = static_cast<double>(rewards.size());
  double mu = 0.0;
  for (double r : rewards) mu += r;
  mu /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mu) * (r - mu);
  var /= g;
  double sigma = std::sqrt(var);
  AdvantageResult out;
  out.advantages.resize(rewards.size(), 0.0);
  if (sigma < 1e-12) {
    out.degenerate = true;
    return out;
  }
  for (size_t i = 0; i < rewards.size(); ++i) {
    out.advantages[i] = (rewards[i] - mu) / sigma;
  }
  return out;
}

}  // namespace rpo
