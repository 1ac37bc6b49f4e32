#include "rpo/task_env.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rpo/rng.hpp"

namespace rpo {

Token Vocab::digit(int d) const {
  if (d < 0 || d >= modulus) {
    throw std::invalid_argument("digit out of range: " + std::to_string(d));
  }
  return kNumSpecials + d;
}

int Vocab::digit_value(Token t) const {
  if (!is_digit(t)) {
    throw std::invalid_argument("not a digit token: " + std::to_string(t));
  }
  return t - kNumSpecials;
}

std::string Vocab::token_name(Token t) const {
  switch (t) {
    case kBos: return "BOS";
    case kEos: return "EOS";
    case kQMark: return "<Q>";
    case kAMark: return "<A>";
    case kAnsMark: return "ANS";
    case kAdd: return "ADD";
    case kMul: return "MUL";
    case kStep: return "=";
    default:
      if (is_digit(t)) return std::to_string(digit_value(t));
      return "?" + std::to_string(t);
  }
}

namespace {

int fold_truth(int p, int start, std::span<const ChainOp> ops) {
  int v = ((start % p) + p) % p;
  for (const ChainOp& op : ops) {
    if (op.kind == OpKind::add) {
      v = (v + op.operand) % p;
    } else {
      v = (v * op.operand) % p;
    }
  }
  return v;
}

}  // namespace

std::vector<Token> build_prompt(const Vocab& vocab, int start,
                                std::span<const ChainOp> ops) {
  std::vector<Token> prompt;
  prompt.reserve(2 * ops.size() + 4);
  prompt.push_back(Vocab::kBos);
  prompt.push_back(Vocab::kQMark);
  prompt.push_back(vocab.digit(start));
  for (const ChainOp& op : ops) {
    prompt.push_back(op.kind == OpKind::add ? Vocab::kAdd : Vocab::kMul);
    prompt.push_back(vocab.digit(op.operand));
  }
  prompt.push_back(Vocab::kAMark);
  return prompt;
}

std::vector<TaskInstance> generate_dataset(uint64_t seed, int n, int p,
                                           int k_min, int k_max) {
  if (n <= 0) throw std::invalid_argument("dataset size must be positive");
  if (p < 2) throw std::invalid_argument("modulus must be at least 2");
  if (k_min < 1 || k_max < k_min) {
    throw std::invalid_argument("invalid chain length range");
  }
  Rng rng(seed);
  Vocab vocab{.modulus = p};
  std::vector<TaskInstance> dataset;
  dataset.reserve(n);
  for (int i = 0; i < n; ++i) {
    TaskInstance inst;
    inst.id = i;
    inst.modulus = p;
    inst.start = rng.uniform_int(p);
    int k = k_min + rng.uniform_int(k_max - k_min + 1);
    inst.ops.reserve(k);
    for (int j = 0; j < k; ++j) {
      ChainOp op;
      op.kind = rng.uniform_int(2) == 0 ? OpKind::add : OpKind::mul;
      op.operand = rng.uniform_int(p);
      inst.ops.push_back(op);
    }
    inst.prompt = build_prompt(vocab, inst.start, inst.ops);
    inst.truth = fold_truth(p, inst.start, inst.ops);
    dataset.push_back(std::move(inst));
  }
  return dataset;
}

int verify(const TaskInstance& instance, const Response& response) {
  Vocab vocab = instance.vocab();
  int last_ans = -1;
  for (int i = 0; i < response.total_len(); ++i) {
    if (response.tokens[i] == Vocab::kAnsMark) last_ans = i;
  }
  if (last_ans < 0 || last_ans + 1 >= response.total_len()) return 0;
  Token t = response.tokens[last_ans + 1];
  if (!vocab.is_digit(t)) return 0;
  return vocab.digit_value(t) == instance.truth ? 1 : 0;
}

Response reference_trace(const TaskInstance& instance) {
  Vocab vocab = instance.vocab();
  Response r;
  int v = ((instance.start % instance.modulus) + instance.modulus) %
          instance.modulus;
  for (const ChainOp& op : instance.ops) {
    if (op.kind == OpKind::add) {
      v = (v + op.operand) % instance.modulus;
    } else {
      v = (v * op.operand) % instance.modulus;
    }
    r.tokens.push_back(Vocab::kStep);
    r.tokens.push_back(vocab.digit(v));
  }
  r.tokens.push_back(Vocab::kAnsMark);
  r.tokens.push_back(vocab.digit(instance.truth));
  r.tokens.push_back(Vocab::kEos);
  r.prefix_len = 0;
  r.decode_len = r.total_len();
  r.terminated = true;
  return r;
}

void save_dataset(const std::string& path,
                  std::span<const TaskInstance> dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const TaskInstance& inst : dataset) {
    out << inst.id << '\t' << inst.modulus << '\t' << inst.start << '\t';
    for (size_t j = 0; j < inst.ops.size(); ++j) {
      if (j > 0) out << ',';
      out << (inst.ops[j].kind == OpKind::add ? "ADD" : "MUL") << ':'
          << inst.ops[j].operand;
    }
    out << '\t' << inst.truth << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

int parse_int_field(const std::string& field, int line_no,
                    const std::string& what) {
  try {
    size_t pos = 0;
    int v = std::stoi(field, &pos);
    if (pos != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": bad " + what + " '" + field + "'");
  }
}

}  // namespace

std::vector<TaskInstance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<TaskInstance> dataset;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 5) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": expected 5 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    TaskInstance inst;
    inst.id = parse_int_field(fields[0], line_no, "id");
    inst.modulus = parse_int_field(fields[1], line_no, "modulus");
    if (inst.modulus < 2) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": modulus must be at least 2");
    }
    inst.start = parse_int_field(fields[2], line_no, "start value");
    if (inst.start < 0 || inst.start >= inst.modulus) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": start value out of range");
    }
    std::stringstream ops_ss(fields[3]);
    std::string op_str;
    while (std::getline(ops_ss, op_str, ',')) {
      size_t colon = op_str.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                 ": bad op '" + op_str + "'");
      }
      std::string kind = op_str.substr(0, colon);
      ChainOp op;
      if (kind == "ADD") {
        op.kind = OpKind::add;
      } else if (kind == "MUL") {
        op.kind = OpKind::mul;
      } else {
        throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                 ": unknown op kind '" + kind + "'");
      }
      op.operand =
          parse_int_field(op_str.substr(colon + 1), line_no, "operand");
      if (op.operand < 0 || op.operand >= inst.modulus) {
        throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                 ": operand out of range");
      }
      inst.ops.push_back(op);
    }
    if (inst.ops.empty()) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": empty op chain");
    }
    inst.truth = parse_int_field(fields[4], line_no, "answer");
    int expect = fold_truth(inst.modulus, inst.start, inst.ops);
    if (inst.truth != expect) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": answer " + std::to_string(inst.truth) +
                               " inconsistent with chain (expected " +
                               std::to_string(expect) + ")");
    }
    inst.prompt = build_prompt(inst.vocab(), inst.start, inst.ops);
    dataset.push_back(std::move(inst));
  }
  return dataset;
}

}  // namespace rpo
