#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rpo/rng.hpp"
#include "rpo/task_env.hpp"

using namespace rpo;

namespace {

// Oracle: fold recomputed independently of the library.
int oracle_fold(int p, int x0, const std::vector<ChainOp>& ops) {
  long long v = x0;
  for (const ChainOp& op : ops) {
    v = op.kind == OpKind::add ? v + op.operand : v * op.operand;
    v %= p;
  }
  return static_cast<int>(v);
}

// Oracle: scan from the end for the last answer marker.
int oracle_verify(const TaskInstance& inst, const std::vector<Token>& toks) {
  Vocab vocab = inst.vocab();
  for (int i = static_cast<int>(toks.size()) - 1; i >= 0; --i) {
    if (toks[i] != Vocab::kAnsMark) continue;
    if (i + 1 >= static_cast<int>(toks.size())) return 0;
    Token next = toks[i + 1];
    return vocab.is_digit(next) && vocab.digit_value(next) == inst.truth;
  }
  return 0;
}

TaskInstance make_instance(int p, int x0, std::vector<ChainOp> ops) {
  TaskInstance inst;
  inst.id = 0;
  inst.modulus = p;
  inst.start = x0;
  inst.ops = std::move(ops);
  inst.prompt = build_prompt(inst.vocab(), x0, inst.ops);
  inst.truth = oracle_fold(p, x0, inst.ops);
  return inst;
}

Response response_of(std::vector<Token> tokens) {
  Response r;
  r.tokens = std::move(tokens);
  r.prefix_len = 0;
  r.decode_len = r.total_len();
  r.terminated = !r.tokens.empty() && r.tokens.back() == Vocab::kEos;
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("vocab layout and helpers") {
  Vocab v{.modulus = 10};
  CHECK(v.size() == 18);
  CHECK(Vocab::kBos == 0);
  CHECK(v.digit(0) == Vocab::kNumSpecials);
  CHECK(v.digit(9) == 17);
  CHECK(v.is_digit(v.digit(5)));
  CHECK_FALSE(v.is_digit(Vocab::kAnsMark));
  CHECK(v.digit_value(v.digit(7)) == 7);
  CHECK_THROWS(v.digit(10));
  CHECK_THROWS(v.digit(-1));
  CHECK(v.token_name(Vocab::kAnsMark) == "ANS");
  CHECK(v.token_name(v.digit(3)) == "3");
}

TEST_CASE("generate_dataset matches the fold oracle and is reproducible") {
  std::vector<TaskInstance> one = generate_dataset(7, 1, 10, 2, 2);
  REQUIRE(one.size() == 1);
  CHECK(one[0].ops.size() == 2);
  CHECK(one[0].truth == oracle_fold(10, one[0].start, one[0].ops));

  std::vector<TaskInstance> a = generate_dataset(42, 50, 7, 1, 4);
  std::vector<TaskInstance> b = generate_dataset(42, 50, 7, 1, 4);
  REQUIRE(a.size() == 50);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == static_cast<int>(i));
    CHECK(a[i].truth == oracle_fold(7, a[i].start, a[i].ops));
    CHECK(a[i].prompt.size() == 2 * a[i].ops.size() + 4);
    CHECK(a[i].ops.size() >= 1);
    CHECK(a[i].ops.size() <= 4);
    CHECK(a[i].prompt == b[i].prompt);
    CHECK(a[i].truth == b[i].truth);
  }
  CHECK_THROWS(generate_dataset(1, 0, 10, 1, 2));
  CHECK_THROWS(generate_dataset(1, 4, 1, 1, 2));
  CHECK_THROWS(generate_dataset(1, 4, 10, 3, 2));
}

TEST_CASE("worked example: ((3+4)*2) mod 10") {
  TaskInstance inst = make_instance(
      10, 3, {{OpKind::add, 4}, {OpKind::mul, 2}});
  CHECK(inst.truth == 4);
  Vocab v = inst.vocab();
  std::vector<Token> want_prompt = {Vocab::kBos, Vocab::kQMark, v.digit(3),
                                    Vocab::kAdd, v.digit(4),    Vocab::kMul,
                                    v.digit(2),  Vocab::kAMark};
  CHECK(inst.prompt == want_prompt);

  Response ref = reference_trace(inst);
  std::vector<Token> want_trace = {Vocab::kStep,    v.digit(7),
                                   Vocab::kStep,    v.digit(4),
                                   Vocab::kAnsMark, v.digit(4), Vocab::kEos};
  CHECK(ref.tokens == want_trace);
  CHECK(verify(inst, ref) == 1);
}

TEST_CASE("trivial folds") {
  TaskInstance a = make_instance(2, 1, {{OpKind::mul, 0}});
  CHECK(a.truth == 0);
  TaskInstance b = make_instance(5, 2, {{OpKind::add, 0}});
  Response ref = reference_trace(b);
  Vocab v = b.vocab();
  std::vector<Token> want = {Vocab::kStep, v.digit(2), Vocab::kAnsMark,
                             v.digit(2), Vocab::kEos};
  CHECK(ref.tokens == want);
}

TEST_CASE("verify follows the last answer marker") {
  TaskInstance inst = make_instance(
      10, 3, {{OpKind::add, 4}, {OpKind::mul, 2}});
  Vocab v = inst.vocab();
  CHECK(verify(inst, response_of({Vocab::kStep, v.digit(7), Vocab::kStep,
                                  v.digit(4), Vocab::kAnsMark, v.digit(4),
                                  Vocab::kEos})) == 1);
  CHECK(verify(inst, response_of({Vocab::kAnsMark, v.digit(5),
                                  Vocab::kEos})) == 0);
  CHECK(verify(inst, response_of({Vocab::kStep, v.digit(7), Vocab::kStep,
                                  v.digit(4), Vocab::kEos})) == 0);
  CHECK(verify(inst, response_of({Vocab::kAnsMark, v.digit(5),
                                  Vocab::kAnsMark, v.digit(4),
                                  Vocab::kEos})) == 1);
  CHECK(verify(inst, response_of({Vocab::kAnsMark, v.digit(4),
                                  Vocab::kAnsMark, v.digit(5),
                                  Vocab::kEos})) == 0);
  CHECK(verify(inst, response_of({Vocab::kAnsMark})) == 0);
  CHECK(verify(inst, response_of({Vocab::kAnsMark, Vocab::kAnsMark})) == 0);
  CHECK(verify(inst, response_of({})) == 0);
  // Unterminated responses are still judged on their ANS segment.
  Response unterminated = response_of({Vocab::kAnsMark, v.digit(4)});
  unterminated.terminated = false;
  CHECK(verify(inst, unterminated) == 1);
}

TEST_CASE("verifier agrees with an independent scanner on random inputs") {
  Rng rng(99);
  std::vector<TaskInstance> dataset = generate_dataset(5, 40, 10, 1, 3);
  Vocab v{.modulus = 10};
  for (int trial = 0; trial < 1000; ++trial) {
    const TaskInstance& inst = dataset[rng.uniform_int(40)];
    int len = 1 + rng.uniform_int(12);
    std::vector<Token> toks;
    for (int i = 0; i < len; ++i) toks.push_back(rng.uniform_int(v.size()));
    Response resp = response_of(toks);
    CHECK(verify(inst, resp) == oracle_verify(inst, toks));
  }
}

TEST_CASE("reference_trace always verifies") {
  std::vector<TaskInstance> dataset = generate_dataset(11, 60, 6, 1, 5);
  for (const TaskInstance& inst : dataset) {
    CHECK(verify(inst, reference_trace(inst)) == 1);
  }
}

TEST_CASE("dataset TSV round trip") {
  std::vector<TaskInstance> dataset = generate_dataset(13, 25, 9, 1, 3);
  std::string path = temp_path("rpo_test_dataset.tsv");
  save_dataset(path, dataset);
  std::vector<TaskInstance> loaded = load_dataset(path);
  REQUIRE(loaded.size() == dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i) {
    CHECK(loaded[i].id == dataset[i].id);
    CHECK(loaded[i].modulus == dataset[i].modulus);
    CHECK(loaded[i].start == dataset[i].start);
    CHECK(loaded[i].truth == dataset[i].truth);
    CHECK(loaded[i].prompt == dataset[i].prompt);
    REQUIRE(loaded[i].ops.size() == dataset[i].ops.size());
    for (size_t j = 0; j < dataset[i].ops.size(); ++j) {
      CHECK(loaded[i].ops[j].kind == dataset[i].ops[j].kind);
      CHECK(loaded[i].ops[j].operand == dataset[i].ops[j].operand);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("dataset loader rejects malformed lines with line numbers") {
  std::string path = temp_path("rpo_test_bad.tsv");
  auto expect_error = [&](const std::string& content,
                          const std::string& fragment) {
    std::ofstream(path) << content;
    try {
      load_dataset(path);
      FAIL("expected a parse error for: " << content);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_error("0\t10\t3\tADD:4\n", "expected 5");
  expect_error("0\t10\t3\tADD:4,MUL:2\t9\n", "inconsistent");
  expect_error("0\t10\t3\tSUB:4\t7\n", "unknown op kind");
  expect_error("0\t10\t3\tADD4\t7\n", "bad op");
  expect_error("x\t10\t3\tADD:4\t7\n", "bad id");
  expect_error("0\t1\t0\tADD:0\t0\n", "modulus");
  expect_error("0\t10\t12\tADD:4\t6\n", "start value out of range");
  expect_error("0\t10\t3\tADD:11\t4\n", "operand out of range");
  expect_error("0\t10\t3\t\t3\n", "empty op chain");
  std::ofstream(path) << "0\t10\t3\tADD:4,MUL:2\t4\n\n";
  CHECK(load_dataset(path).size() == 1);
  std::filesystem::remove(path);
}
