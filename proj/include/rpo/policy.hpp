#pragma once

// Order-n tabular softmax policy: logits are stored per context (the last n
// token ids, BOS-left-padded) and unseen contexts act as all-zero logit rows,
// so the distribution is defined everywhere with bounded memory. Gradients of
// log-probabilities and KL divergences are exact.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rpo/rng.hpp"
#include "rpo/task_env.hpp"

namespace rpo {

using Context = std::vector<Token>;

// Sparse gradient, one row per touched context. Accumulation iterates rows in
// sorted context order so repeated runs sum bit-identically.
class GradAccumulator {
 public:
  explicit GradAccumulator(int vocab_size) : vocab_size_(vocab_size) {}

  int vocab_size() const { return vocab_size_; }
  bool empty() const { return rows_.empty(); }
  size_t num_rows() const { return rows_.size(); }

  std::vector<double>& row(const Context& ctx);
  const std::map<Context, std::vector<double>>& rows() const { return rows_; }

  void add(const Context& ctx, Token t, double value);
  void add_scaled(const GradAccumulator& other, double s);
  void scale(double s);
  void clear() { rows_.clear(); }

  double l2_norm() const;
  bool all_finite() const;
  // Squared L2 distance treating absent rows as zero.
  double squared_distance(const GradAccumulator& other) const;

 private:
  int vocab_size_;
  std::map<Context, std::vector<double>> rows_;
};

struct SampleResult {
  std::vector<Token> tokens;
  std::vector<double> logprobs;  // untempered, one per sampled token
  bool terminated = false;
};

class NgramPolicy {
 public:
  NgramPolicy(int order, int vocab_size);

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  // Context of the token at position pos in seq (the n preceding tokens,
  // BOS-padded on the left).
  Context context_at(std::span<const Token> seq, size_t pos) const;

  // Dense logit row; zeros when the context was never touched.
  std::vector<double> logits(const Context& ctx) const;
  double get_logit(const Context& ctx, Token t) const;
  void set_logit(const Context& ctx, Token t, double value);
  void add_logit(const Context& ctx, Token t, double delta);

  size_t num_contexts() const { return table_.size(); }
  const std::map<Context, std::vector<double>>& table() const {
    return table_;
  }

  // Autoregressive sampling continuing prompt_plus_prefix. Exploration uses
  // softmax(logits / temperature); the returned log-probs are the untempered
  // model log-probs of the sampled tokens. Stops after EOS or max_new tokens.
  SampleResult sample(std::span<const Token> prompt_plus_prefix,
                      double temperature, int max_new, Rng& rng) const;

  // Log-probabilities of seq's tokens at positions >= start.
  std::vector<double> logprob(std::span<const Token> seq, size_t start) const;

  // Adds weight_j * (onehot(token_j) - softmax(logits(ctx_j))) into out for
  // every position j >= start.
  void grad_logprob(std::span<const Token> seq, size_t start,
                    std::span<const double> weights,
                    GradAccumulator& out) const;

  // Mean over the given contexts of the exact KL(this || ref).
  double kl_to(const NgramPolicy& ref, std::span<const Context> contexts) const;

  // logits[c][v] += lr * grad[c][v]. Returns false (and leaves the policy
  // untouched) if any gradient entry is non-finite.
  bool apply_update(const GradAccumulator& grad, double lr);

  NgramPolicy snapshot() const { return *this; }

  void save(const std::string& path) const;
  static NgramPolicy load(const std::string& path);

 private:
  int order_;
  int vocab_size_;
  int64_t step_ = 0;
  std::map<Context, std::vector<double>> table_;
};

// Numerically stable log softmax / softmax over a dense logit row.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

}  // namespace rpo
