#include "rpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rpo {

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double>& GradAccumulator::row(const Context& ctx) {
  auto it = rows_.find(ctx);
  if (it == rows_.end()) {
    it = rows_.emplace(ctx, std::vector<double>(vocab_size_, 0.0)).first;
  }
  return it->second;
}

void GradAccumulator::add(const Context& ctx, Token t, double value) {
  row(ctx)[t] += value;
}

void GradAccumulator::add_scaled(const GradAccumulator& other, double s) {
  for (const auto& [ctx, vals] : other.rows_) {
    std::vector<double>& dst = row(ctx);
    for (int v = 0; v < vocab_size_; ++v) dst[v] += s * vals[v];
  }
}

void GradAccumulator::scale(double s) {
  for (auto& [ctx, vals] : rows_) {
    for (double& v : vals) v *= s;
  }
}

double GradAccumulator::l2_norm() const {
  double sq = 0.0;
  for (const auto& [ctx, vals] : rows_) {
    for (double v : vals) sq += v * v;
  }
  return std::sqrt(sq);
}

bool GradAccumulator::all_finite() const {
  for (const auto& [ctx, vals] : rows_) {
    for (double v : vals) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double GradAccumulator::squared_distance(const GradAccumulator& other) const {
  double sq = 0.0;
  auto a = rows_.begin();
  auto b = other.rows_.begin();
  while (a != rows_.end() || b != other.rows_.end()) {
    if (b == other.rows_.end() ||
        (a != rows_.end() && a->first < b->first)) {
      for (double v : a->second) sq += v * v;
      ++a;
    } else if (a == rows_.end() || b->first < a->first) {
      for (double v : b->second) sq += v * v;
      ++b;
    } else {
      for (int v = 0; v < vocab_size_; ++v) {
        double d = a->second[v] - b->second[v];
        sq += d * d;
      }
      ++a;
      ++b;
    }
  }
  return sq;
}

NgramPolicy::NgramPolicy(int order, int vocab_size)
    : order_(order), vocab_size_(vocab_size) {
  if (order < 1) throw std::invalid_argument("policy order must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("vocab size must be >= 2");
}

Context NgramPolicy::context_at(std::span<const Token> seq, size_t pos) const {
  if (pos > seq.size()) throw std::out_of_range("context position past end");
  Context ctx(order_, Vocab::kBos);
  size_t take = std::min<size_t>(order_, pos);
  for (size_t i = 0; i < take; ++i) {
    ctx[order_ - take + i] = seq[pos - take + i];
  }
  return ctx;
}

std::vector<double> NgramPolicy::logits(const Context& ctx) const {
  auto it = table_.find(ctx);
  if (it == table_.end()) return std::vector<double>(vocab_size_, 0.0);
  return it->second;
}

double NgramPolicy::get_logit(const Context& ctx, Token t) const {
  auto it = table_.find(ctx);
  if (it == table_.end()) return 0.0;
  return it->second[t];
}

void NgramPolicy::set_logit(const Context& ctx, Token t, double value) {
  auto it = table_.find(ctx);
  if (it == table_.end()) {
    it = table_.emplace(ctx, std::vector<double>(vocab_size_, 0.0)).first;
  }
  it->second[t] = value;
}

void NgramPolicy::add_logit(const Context& ctx, Token t, double delta) {
  set_logit(ctx, t, get_logit(ctx, t) + delta);
}

SampleResult NgramPolicy::sample(std::span<const Token> prompt_plus_prefix,
                                 double temperature, int max_new,
                                 Rng& rng) const {
  if (prompt_plus_prefix.empty()) {
    throw std::invalid_argument("sample requires a non-empty input sequence");
  }
  if (temperature <= 0.0) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");

  SampleResult out;
  std::vector<Token> seq(prompt_plus_prefix.begin(), prompt_plus_prefix.end());
  for (int i = 0; i < max_new; ++i) {
    Context ctx = context_at(seq, seq.size());
    std::vector<double> row = logits(ctx);
    std::vector<double> tempered(row.size());
    for (size_t v = 0; v < row.size(); ++v) tempered[v] = row[v] / temperature;
    std::vector<double> probs = softmax(tempered);
    Token t = static_cast<Token>(rng.categorical(probs));
    std::vector<double> lp = log_softmax(row);
    out.tokens.push_back(t);
    out.logprobs.push_back(lp[t]);
    seq.push_back(t);
    if (t == Vocab::kEos) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

std::vector<double> NgramPolicy::logprob(std::span<const Token> seq,
                                         size_t start) const {
  if (seq.empty() || start >= seq.size()) {
    throw std::invalid_argument("logprob start out of range");
  }
  std::vector<double> out;
  out.reserve(seq.size() - start);
  for (size_t j = start; j < seq.size(); ++j) {
    Token t = seq[j];
    if (t < 0 || t >= vocab_size_) {
      throw std::invalid_argument("token id out of vocab: " +
                                  std::to_string(t));
    }
    Context ctx = context_at(seq, j);
    std::vector<double> lp = log_softmax(logits(ctx));
    out.push_back(lp[t]);
  }
  return out;
}

void NgramPolicy::grad_logprob(std::span<const Token> seq, size_t start,
                               std::span<const double> weights,
                               GradAccumulator& out) const {
  if (seq.empty() || start >= seq.size()) {
    throw std::invalid_argument("grad_logprob start out of range");
  }
  if (weights.size() != seq.size() - start) {
    throw std::invalid_argument("weights length mismatch");
  }
  for (size_t j = start; j < seq.size(); ++j) {
    double w = weights[j - start];
    if (w == 0.0) continue;
    Token t = seq[j];
    if (t < 0 || t >= vocab_size_) {
      throw std::invalid_argument("token id out of vocab: " +
                                  std::to_string(t));
    }
    Context ctx = context_at(seq, j);
    std::vector<double> probs = softmax(logits(ctx));
    std::vector<double>& dst = out.row(ctx);
    for (int v = 0; v < vocab_size_; ++v) dst[v] -= w * probs[v];
    dst[t] += w;
  }
}

double NgramPolicy::kl_to(const NgramPolicy& ref,
                          std::span<const Context> contexts) const {
  if (ref.vocab_size_ != vocab_size_ || ref.order_ != order_) {
    throw std::invalid_argument("kl_to requires matching vocab and order");
  }
  if (contexts.empty()) return 0.0;
  double total = 0.0;
  for (const Context& ctx : contexts) {
    std::vector<double> lp = log_softmax(logits(ctx));
    std::vector<double> lq = log_softmax(ref.logits(ctx));
    double kl = 0.0;
    for (int v = 0; v < vocab_size_; ++v) {
      kl += std::exp(lp[v]) * (lp[v] - lq[v]);
    }
    total += kl;
  }
  return total / static_cast<double>(contexts.size());
}

bool NgramPolicy::apply_update(const GradAccumulator& grad, double lr) {
  if (!std::isfinite(lr)) throw std::invalid_argument("lr must be finite");
  if (!grad.all_finite()) return false;
  if (lr == 0.0) return true;  // avoid materializing untouched rows
  for (const auto& [ctx, vals] : grad.rows()) {
    auto it = table_.find(ctx);
    if (it == table_.end()) {
      it = table_.emplace(ctx, std::vector<double>(vocab_size_, 0.0)).first;
    }
    for (int v = 0; v < vocab_size_; ++v) it->second[v] += lr * vals[v];
  }
  return true;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void NgramPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << order_ << ' ' << vocab_size_ << ' ' << step_ << '\n';
  for (const auto& [ctx, vals] : table_) {
    for (size_t i = 0; i < ctx.size(); ++i) {
      if (i > 0) out << ' ';
      out << ctx[i];
    }
    out << " |";
    for (double v : vals) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

NgramPolicy NgramPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("checkpoint is empty: " + path);
  }
  int order = 0;
  int vocab_size = 0;
  int64_t step = 0;
  {
    std::stringstream ss(line);
    if (!(ss >> order >> vocab_size >> step)) {
      throw std::runtime_error("checkpoint line 1: bad header '" + line + "'");
    }
    std::string rest;
    if (ss >> rest) {
      throw std::runtime_error("checkpoint line 1: trailing data '" + rest +
                               "'");
    }
  }
  NgramPolicy policy(order, vocab_size);
  policy.step_ = step;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t bar = line.find('|');
    if (bar == std::string::npos) {
      throw std::runtime_error("checkpoint line " + std::to_string(line_no) +
                               ": missing '|'");
    }
    Context ctx;
    {
      std::stringstream ss(line.substr(0, bar));
      Token t;
      while (ss >> t) {
        if (t < 0 || t >= vocab_size) {
          throw std::runtime_error("checkpoint line " +
                                   std::to_string(line_no) +
                                   ": context id out of vocab");
        }
        ctx.push_back(t);
      }
    }
    if (static_cast<int>(ctx.size()) != order) {
      throw std::runtime_error("checkpoint line " + std::to_string(line_no) +
                               ": context length " +
                               std::to_string(ctx.size()) + " != order " +
                               std::to_string(order));
    }
    std::vector<double> vals;
    {
      std::stringstream ss(line.substr(bar + 1));
      std::string tok;
      while (ss >> tok) {
        try {
          size_t pos = 0;
          double v = std::stod(tok, &pos);
          if (pos != tok.size()) throw std::invalid_argument(tok);
          vals.push_back(v);
        } catch (const std::out_of_range&) {
          throw std::runtime_error("checkpoint line " +
                                   std::to_string(line_no) +
                                   ": logit out of range '" + tok + "'");
        } catch (const std::exception&) {
          throw std::runtime_error("checkpoint line " +
                                   std::to_string(line_no) + ": bad logit '" +
                                   tok + "'");
        }
      }
    }
    if (static_cast<int>(vals.size()) != vocab_size) {
      throw std::runtime_error("checkpoint line " + std::to_string(line_no) +
                               ": expected " + std::to_string(vocab_size) +
                               " logits, got " + std::to_string(vals.size()));
    }
    for (double v : vals) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("checkpoint line " + std::to_string(line_no) +
                                 ": non-finite logit");
      }
    }
    if (!policy.table_.emplace(std::move(ctx), std::move(vals)).second) {
      throw std::runtime_error("checkpoint line " + std::to_string(line_no) +
                               ": duplicate context");
    }
  }
  return policy;
}

}  // namespace rpo
