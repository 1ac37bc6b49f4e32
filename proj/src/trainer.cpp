#include "rpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace rpo {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::grpo: return "grpo";
    case TrainMode::grpo_rpo: return "grpo_rpo";
    case TrainMode::dapo: return "dapo";
    case TrainMode::dapo_rpo: return "dapo_rpo";
  }
  throw std::logic_error("unreachable train mode");
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "grpo") return TrainMode::grpo;
  if (s == "grpo_rpo") return TrainMode::grpo_rpo;
  if (s == "dapo") return TrainMode::dapo;
  if (s == "dapo_rpo") return TrainMode::dapo_rpo;
  throw std::invalid_argument("unknown train mode '" + s + "'");
}

bool uses_cache(TrainMode mode) {
  return mode == TrainMode::grpo_rpo || mode == TrainMode::dapo_rpo;
}

bool uses_dapo_filter(TrainMode mode) {
  return mode == TrainMode::dapo || mode == TrainMode::dapo_rpo;
}

void validate(const TrainConfig& cfg) {
  if (cfg.group_size < 2) {
    throw std::invalid_argument("train.group_size must be >= 2");
  }
  if (!std::isfinite(cfg.lr)) throw std::invalid_argument("train.lr not finite");
  if (!(cfg.temperature > 0.0)) {
    throw std::invalid_argument("train.temperature must be > 0");
  }
  if (cfg.max_gen_len < 1) {
    throw std::invalid_argument("train.max_gen_len must be >= 1");
  }
  if (cfg.epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (cfg.batch_size < 0) {
    throw std::invalid_argument("train.batch_size must be >= 0");
  }
  if (cfg.inner_epochs < 1) {
    throw std::invalid_argument("train.inner_epochs must be >= 1");
  }
  if (cfg.clip_eps_low < 0.0 || cfg.clip_eps_high < 0.0 ||
      cfg.clip_eps_low >= 1.0) {
    throw std::invalid_argument("clip epsilons out of range");
  }
  if (uses_dapo_filter(cfg.mode) && cfg.clip_eps_high < cfg.clip_eps_low) {
    throw std::invalid_argument(
        "dapo modes require clip_eps_high >= clip_eps_low");
  }
  if (cfg.beta < 0.0) throw std::invalid_argument("train.beta must be >= 0");
  if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0) {
    throw std::invalid_argument("cache.epsilon must be in [0,1]");
  }
  if (cfg.trunc.mode == TruncMode::fixed && cfg.trunc.L_fixed < 0) {
    throw std::invalid_argument("trunc.L must be >= 0");
  }
  validate(cfg.shaping);
}

std::vector<RolloutGroup> dapo_filter(std::vector<RolloutGroup> groups) {
  std::erase_if(groups, [](const RolloutGroup& g) { return g.degenerate; });
  return groups;
}

namespace {

// d KL(p||q) / d logit_w = p_w * ((log p_w - log q_w) - KL); exact.
void add_kl_gradient(const NgramPolicy& policy, const NgramPolicy& ref,
                     const Context& ctx, double coeff, GradAccumulator& grad) {
  std::vector<double> lp = log_softmax(policy.logits(ctx));
  std::vector<double> lq = log_softmax(ref.logits(ctx));
  int vs = policy.vocab_size();
  double kl = 0.0;
  for (int v = 0; v < vs; ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
  std::vector<double>& dst = grad.row(ctx);
  for (int v = 0; v < vs; ++v) {
    dst[v] += coeff * std::exp(lp[v]) * ((lp[v] - lq[v]) - kl);
  }
}

double context_kl(const NgramPolicy& policy, const NgramPolicy& ref,
                  const Context& ctx) {
  std::vector<double> lp = log_softmax(policy.logits(ctx));
  std::vector<double> lq = log_softmax(ref.logits(ctx));
  double kl = 0.0;
  for (size_t v = 0; v < lp.size(); ++v) {
    kl += std::exp(lp[v]) * (lp[v] - lq[v]);
  }
  return kl;
}

}  // namespace

std::pair<GradAccumulator, LossBreakdown> compute_loss_grad(
    std::span<const RolloutGroup> groups, const NgramPolicy& policy,
    const NgramPolicy& ref, const TrainConfig& cfg) {
  if (groups.empty()) {
    throw std::invalid_argument("compute_loss_grad requires groups");
  }
  GradAccumulator grad(policy.vocab_size());
  LossBreakdown lb;
  double n_groups = static_cast<double>(groups.size());
  int64_t clipped = 0;
  // Per-token KL weights; outer placement instead collects distinct contexts.
  std::map<Context, double> kl_weights;
  std::set<Context> kl_contexts;

  for (const RolloutGroup& group : groups) {
    double g = static_cast<double>(group.size());
    for (int i = 0; i < group.size(); ++i) {
      const Response& resp = group.responses[i];
      if (resp.decode_len == 0) continue;
      std::vector<Token> seq = group.prompt;
      seq.insert(seq.end(), resp.tokens.begin(), resp.tokens.end());
      size_t start = group.prompt.size() + resp.prefix_len;
      std::vector<double> lp = policy.logprob(seq, start);
      const std::vector<double>& behave = group.behavior_logprobs[i];
      double adv = group.advantages[i];
      double w = 1.0 / (static_cast<double>(resp.decode_len) * g * n_groups);
      std::vector<double> weights(resp.decode_len, 0.0);
      for (int j = 0; j < resp.decode_len; ++j) {
        ++lb.decode_tokens;
        if (cfg.kl_per_token) {
          kl_weights[policy.context_at(seq, start + j)] += w;
        } else {
          kl_contexts.insert(policy.context_at(seq, start + j));
        }
        if (adv == 0.0) continue;
        double ratio = std::exp(lp[j] - behave[j]);
        double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps_low,
                                          1.0 + cfg.clip_eps_high);
        double u = ratio * adv;
        double v = clipped_ratio * adv;
        if (u <= v) {
          lb.surrogate += u * w;
          weights[j] = ratio * adv * w;
        } else {
          lb.surrogate += v * w;
          ++clipped;
        }
      }
      policy.grad_logprob(seq, start, weights, grad);
    }
  }

  if (cfg.kl_per_token) {
    double total_w = 0.0;
    double kl_term = 0.0;
    for (const auto& [ctx, w] : kl_weights) {
      double kl = context_kl(policy, ref, ctx);
      kl_term += w * kl;
      total_w += w;
      if (cfg.beta > 0.0) {
        add_kl_gradient(policy, ref, ctx, -cfg.beta * w, grad);
      }
    }
    lb.kl = total_w > 0.0 ? kl_term / total_w : 0.0;
    lb.objective = lb.surrogate - cfg.beta * kl_term;
  } else {
    double kl_sum = 0.0;
    double n_ctx = static_cast<double>(kl_contexts.size());
    for (const Context& ctx : kl_contexts) {
      kl_sum += context_kl(policy, ref, ctx);
      if (cfg.beta > 0.0) {
        add_kl_gradient(policy, ref, ctx, -cfg.beta / n_ctx, grad);
      }
    }
    lb.kl = n_ctx > 0.0 ? kl_sum / n_ctx : 0.0;
    lb.objective = lb.surrogate - cfg.beta * lb.kl;
  }
  lb.clip_fraction = lb.decode_tokens > 0
                         ? static_cast<double>(clipped) /
                               static_cast<double>(lb.decode_tokens)
                         : 0.0;
  return {std::move(grad), lb};
}

Trainer::Trainer(std::vector<TaskInstance> dataset, NgramPolicy policy,
                 TrainConfig cfg, std::optional<ReplayCache> cache)
    : dataset_(std::move(dataset)),
      policy_(std::move(policy)),
      reference_(policy_.snapshot()),
      cfg_(cfg),
      cache_(std::move(cache)),
      rng_(derive_seed(cfg.seed, 0x7EA1BA7CULL)) {
  validate(cfg_);
  if (dataset_.empty()) throw std::invalid_argument("empty dataset");
  if (uses_cache(cfg_.mode)) {
    if (!cache_) {
      throw std::invalid_argument("RPO modes require an initialized cache");
    }
    for (const TaskInstance& inst : dataset_) {
      if (!cache_->contains(inst.id)) {
        throw std::invalid_argument("cache is missing question " +
                                    std::to_string(inst.id));
      }
    }
  }
}

int Trainer::steps_per_epoch() const {
  int n = static_cast<int>(dataset_.size());
  int b = cfg_.batch_size == 0 ? n : std::min(cfg_.batch_size, n);
  return (n + b - 1) / b;
}

int Trainer::epoch() const {
  return static_cast<int>(step_count_ / steps_per_epoch());
}

int64_t Trainer::total_steps() const {
  return static_cast<int64_t>(cfg_.epochs) * steps_per_epoch();
}

const ReplayCache& Trainer::cache() const {
  if (!cache_) throw std::logic_error("trainer has no cache");
  return *cache_;
}

RolloutGroup Trainer::rollout_group(const TaskInstance& question,
                                    const NgramPolicy& behavior, Rng& rng) {
  RolloutGroup group;
  group.question_id = question.id;
  group.prompt = question.prompt;

  std::vector<Token> shared_prefix;
  bool rpo = uses_cache(cfg_.mode);
  const std::vector<Token>* answer = nullptr;
  std::vector<int> lengths;
  if (rpo) {
    answer = &cache_->retrieve(question.id);
    auto it = last_group_lengths_.find(question.id);
    if (it != last_group_lengths_.end()) {
      lengths = it->second;
    } else {
      lengths.push_back(static_cast<int>(answer->size()));
    }
    if (!cfg_.per_response_m) {
      shared_prefix =
          sample_prefix(*answer, cfg_.trunc, std::span<const int>(lengths), rng)
              .prefix;
    }
  }

  for (int i = 0; i < cfg_.group_size; ++i) {
    Response resp;
    if (rpo) {
      resp.tokens =
          cfg_.per_response_m
              ? sample_prefix(*answer, cfg_.trunc,
                              std::span<const int>(lengths), rng)
                    .prefix
              : shared_prefix;
    }
    resp.prefix_len = resp.total_len();
    bool prefix_done = resp.prefix_len > 0 && resp.tokens.back() == Vocab::kEos;
    int max_new = cfg_.max_gen_len - resp.prefix_len;
    if (prefix_done || max_new < 1) {
      resp.decode_len = 0;
      resp.terminated = prefix_done;
      group.behavior_logprobs.emplace_back();
    } else {
      std::vector<Token> seq = group.prompt;
      seq.insert(seq.end(), resp.tokens.begin(), resp.tokens.end());
      SampleResult s = behavior.sample(seq, cfg_.temperature, max_new, rng);
      resp.tokens.insert(resp.tokens.end(), s.tokens.begin(), s.tokens.end());
      resp.decode_len = static_cast<int>(s.tokens.size());
      resp.terminated = s.terminated;
      group.behavior_logprobs.push_back(std::move(s.logprobs));
    }
    group.raw_rewards.push_back(verify(question, resp));
    group.responses.push_back(std::move(resp));
  }

  group.ell_ref = ell_ref(group.responses);
  for (int i = 0; i < group.size(); ++i) {
    group.shaped_rewards.push_back(
        shape_reward(group.raw_rewards[i], group.responses[i].total_len(),
                     group.ell_ref, cfg_.shaping));
  }
  AdvantageResult adv = group_advantages(group.shaped_rewards);
  group.advantages = std::move(adv.advantages);
  group.degenerate = adv.degenerate;
  return group;
}

MetricsRecord Trainer::train_step() {
  int n = static_cast<int>(dataset_.size());
  int b = cfg_.batch_size == 0 ? n : std::min(cfg_.batch_size, n);
  int spe = steps_per_epoch();
  int in_epoch = static_cast<int>(step_count_ % spe);
  int begin = in_epoch * b;
  int end = std::min(begin + b, n);

  NgramPolicy behavior = policy_.snapshot();
  std::vector<RolloutGroup> groups;
  groups.reserve(end - begin);
  for (int idx = begin; idx < end; ++idx) {
    groups.push_back(rollout_group(dataset_[idx], behavior, rng_));
  }

  MetricsRecord rec;
  rec.mode = to_string(cfg_.mode);
  rec.epoch = static_cast<int>(step_count_ / spe);

  int64_t total_resp = 0;
  int64_t correct = 0;
  int64_t len_sum = 0;
  int64_t decode_sum = 0;
  int degenerate = 0;
  for (const RolloutGroup& g : groups) {
    if (g.degenerate) ++degenerate;
    for (int i = 0; i < g.size(); ++i) {
      ++total_resp;
      correct += static_cast<int64_t>(g.raw_rewards[i]);
      len_sum += g.responses[i].total_len();
      decode_sum += g.responses[i].decode_len;
    }
  }
  rec.samples = total_resp;
  rec.accuracy = static_cast<double>(correct) / total_resp;
  rec.mean_response_len = static_cast<double>(len_sum) / total_resp;
  rec.mean_decode_tokens = static_cast<double>(decode_sum) / total_resp;
  rec.degenerate_group_fraction =
      static_cast<double>(degenerate) / static_cast<double>(groups.size());
  total_decode_tokens_ += decode_sum;

  std::vector<RolloutGroup> active =
      uses_dapo_filter(cfg_.mode) ? dapo_filter(groups) : groups;
  if (active.empty()) {
    rec.flags |= 2;
  } else {
    for (int e = 0; e < cfg_.inner_epochs; ++e) {
      auto [grad, lb] = compute_loss_grad(active, policy_, reference_, cfg_);
      if (!std::isfinite(lb.objective) || !grad.all_finite()) {
        rec.flags |= 1;
        break;
      }
      policy_.apply_update(grad, cfg_.lr);
      rec.grad_norm = grad.l2_norm();
      rec.loss = -lb.objective;
      rec.kl = lb.kl;
      rec.clip_fraction = lb.clip_fraction;
    }
  }

  if (uses_cache(cfg_.mode)) {
    for (const RolloutGroup& g : groups) {
      cache_->update(g.question_id, g, cfg_.epsilon, cfg_.cache_guard,
                     step_count_ + 1, rng_);
    }
  }
  for (const RolloutGroup& g : groups) {
    std::vector<int> lens;
    lens.reserve(g.size());
    for (const Response& r : g.responses) lens.push_back(r.total_len());
    last_group_lengths_[g.question_id] = std::move(lens);
  }

  ++step_count_;
  policy_.set_step(step_count_);
  rec.step = step_count_;
  return rec;
}

void warmstart_from_references(NgramPolicy& policy,
                               std::span<const TaskInstance> dataset,
                               double boost) {
  if (boost == 0.0) return;
  for (const TaskInstance& inst : dataset) {
    Response ref = reference_trace(inst);
    std::vector<Token> seq = inst.prompt;
    seq.insert(seq.end(), ref.tokens.begin(), ref.tokens.end());
    for (size_t j = inst.prompt.size(); j < seq.size(); ++j) {
      policy.add_logit(policy.context_at(seq, j), seq[j], boost);
    }
  }
}

}  // namespace rpo
