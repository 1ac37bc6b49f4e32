#pragma once

// MOD-CHAIN: a synthetic verifiable reasoning task. Each instance is a start
// value and a chain of ADD/MUL operations over Z_p; the answer is the
// left-to-right fold reduced mod p after every step. The verifier is binary:
// a response scores 1 iff the token right after its LAST answer marker is the
// digit token of the true result.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rpo {

using Token = int32_t;

// Token ids are fixed: specials first, then the p digit tokens.
struct Vocab {
  static constexpr Token kBos = 0;
  static constexpr Token kEos = 1;
  static constexpr Token kQMark = 2;   // "<Q>"
  static constexpr Token kAMark = 3;   // "<A>"
  static constexpr Token kAnsMark = 4; // "ANS"
  static constexpr Token kAdd = 5;
  static constexpr Token kMul = 6;
  static constexpr Token kStep = 7;    // "="
  static constexpr int kNumSpecials = 8;

  int modulus = 10;

  int size() const { return modulus + kNumSpecials; }
  Token digit(int d) const;
  bool is_digit(Token t) const { return t >= kNumSpecials && t < size(); }
  int digit_value(Token t) const;
  bool contains(Token t) const { return t >= 0 && t < size(); }
  std::string token_name(Token t) const;
};

enum class OpKind : uint8_t { add, mul };

struct ChainOp {
  OpKind kind = OpKind::add;
  int operand = 0;
};

struct TaskInstance {
  int id = 0;
  int modulus = 10;
  int start = 0;
  std::vector<ChainOp> ops;
  std::vector<Token> prompt;  // BOS <Q> x0 op1 c1 ... opk ck <A>
  int truth = 0;

  Vocab vocab() const { return Vocab{.modulus = modulus}; }
};

// A generated answer: cache prefix (if any) plus newly decoded tokens. Never
// includes the prompt.
struct Response {
  std::vector<Token> tokens;
  int prefix_len = 0;
  int decode_len = 0;
  bool terminated = false;

  int total_len() const { return static_cast<int>(tokens.size()); }
};

// Deterministic instance generation; ids are 0..n-1, op-chain length uniform
// in [k_min, k_max].
std::vector<TaskInstance> generate_dataset(uint64_t seed, int n, int p,
                                           int k_min, int k_max);

// Binary verifiable reward. Malformed responses yield 0; never throws.
int verify(const TaskInstance& instance, const Response& response);

// Canonical verbose reasoning path "= v1 ... = vk ANS y EOS"; always scores 1.
Response reference_trace(const TaskInstance& instance);

// TSV serialization: id, p, x0, "OP1:c1,OP2:c2,...", y per line.
void save_dataset(const std::string& path,
                  std::span<const TaskInstance> dataset);
std::vector<TaskInstance> load_dataset(const std::string& path);

std::vector<Token> build_prompt(const Vocab& vocab, int start,
                                std::span<const ChainOp> ops);

}  // namespace rpo
