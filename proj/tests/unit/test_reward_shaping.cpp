#include <cmath>

#include "doctest.h"
#include "rpo/reward_shaping.hpp"
#include "rpo/rng.hpp"
#include "rpo/stats.hpp"

using namespace rpo;

namespace {

ShapingConfig default_cfg() {
  return ShapingConfig{.alpha = 0.01, .m = 0.5, .M = 1.0, .enabled = true};
}

Response of_length(int len) {
  Response r;
  r.tokens.assign(len, Vocab::kStep);
  r.prefix_len = len / 3;
  r.decode_len = len - r.prefix_len;
  return r;
}

}  // namespace

TEST_CASE("shaping midpoint, saturation, and clip bounds") {
  ShapingConfig cfg = default_cfg();
  // At len == ell_ref the logistic is exactly 1/2.
  CHECK(shape_reward(1.0, 100, 100.0, cfg) == 0.5);
  for (double alpha : {0.0, 0.01, 0.3, 7.0}) {
    cfg.alpha = alpha;
    CHECK(shape_reward(1.0, 25, 25.0, cfg) == 0.5);
  }
  cfg = default_cfg();
  // alpha * gap = 10 puts the logistic at 1/(1+e^-10).
  double expected = 1.0 / (1.0 + std::exp(-10.0));
  CHECK(expected == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(shape_reward(1.0, 1, 1001.0, cfg) ==
        doctest::Approx(expected).epsilon(1e-12));
  // Far past ell_ref the lower clip takes over.
  CHECK(shape_reward(1.0, 3000, 1000.0, cfg) == 0.5);
  CHECK(shape_reward(1.0, 50000, 10.0, cfg) == 0.5);
}

TEST_CASE("zero rewards and disabled shaping pass through") {
  ShapingConfig cfg = default_cfg();
  CHECK(shape_reward(0.0, 10, 20.0, cfg) == 0.0);
  CHECK(shape_reward(0.0, 9999, 1.0, cfg) == 0.0);
  cfg.enabled = false;
  CHECK(shape_reward(1.0, 10, 20.0, cfg) == 1.0);
  CHECK(shape_reward(0.0, 10, 20.0, cfg) == 0.0);
}

TEST_CASE("shaping argument validation") {
  ShapingConfig cfg = default_cfg();
  CHECK_THROWS(shape_reward(1.0, 0, 10.0, cfg));
  CHECK_THROWS(shape_reward(1.0, 5, 0.0, cfg));
  ShapingConfig bad = cfg;
  bad.m = 1.0;
  bad.M = 0.5;
  CHECK_THROWS(validate(bad));
  bad = cfg;
  bad.alpha = -0.1;
  CHECK_THROWS(validate(bad));
}

TEST_CASE("shaped reward is non-increasing in length and bounded") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    ShapingConfig cfg = default_cfg();
    cfg.alpha = rng.uniform01() * 0.5;
    double ell = 1.0 + rng.uniform01() * 200.0;
    double prev = cfg.M + 1.0;
    for (int len = 1; len <= 300; len += 1 + rng.uniform_int(7)) {
      double s = shape_reward(1.0, len, ell, cfg);
      CHECK(s >= cfg.m);
      CHECK(s <= cfg.M);
      CHECK(s <= prev + 1e-15);
      prev = s;
    }
  }
}

TEST_CASE("shorter correct responses never score below longer ones") {
  Rng rng(22);
  ShapingConfig cfg = default_cfg();
  cfg.alpha = 0.05;
  for (int trial = 0; trial < 500; ++trial) {
    int a = 1 + rng.uniform_int(100);
    int b = 1 + rng.uniform_int(100);
    if (a > b) std::swap(a, b);
    double ell = 1.0 + rng.uniform01() * 120.0;
    CHECK(shape_reward(1.0, a, ell, cfg) >= shape_reward(1.0, b, ell, cfg));
  }
}

TEST_CASE("alpha zero removes length discrimination among correct answers") {
  ShapingConfig cfg = default_cfg();
  cfg.alpha = 0.0;
  for (int len : {1, 5, 40, 999}) {
    CHECK(shape_reward(1.0, len, 37.0, cfg) == 0.5);
  }
  // Half reward r=0.5: clip(0.25, 0.5, 1) pins at the lower bound.
  CHECK(shape_reward(0.5, 10, 37.0, cfg) == 0.5);
}

TEST_CASE("ell_ref is the mean total length") {
  std::vector<Response> group = {of_length(10), of_length(20)};
  CHECK(ell_ref(group) == 15.0);
  std::vector<Response> one = {of_length(7)};
  CHECK(ell_ref(one) == 7.0);
  std::vector<Response> three = {of_length(12), of_length(8), of_length(20)};
  double expect = 0.0;
  for (const Response& r : three) expect += r.prefix_len + r.decode_len;
  expect /= 3.0;
  CHECK(ell_ref(three) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(expect == doctest::Approx((12 + 8 + 20) / 3.0).epsilon(1e-15));
  std::vector<Response> empty;
  CHECK_THROWS(ell_ref(empty));
}

TEST_CASE("group advantage examples") {
  {
    std::vector<double> rewards = {1.0, 0.0};
    AdvantageResult r = group_advantages(rewards);
    CHECK_FALSE(r.degenerate);
    CHECK(r.advantages[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.advantages[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  {
    std::vector<double> rewards(5, 0.73);
    AdvantageResult r = group_advantages(rewards);
    CHECK(r.degenerate);
    for (double a : r.advantages) CHECK(a == 0.0);
  }
  {
    // mu = 1/3, population sigma = sqrt(2/9): hand-computed normalization.
    std::vector<double> rewards = {1, 1, 0, 0, 0, 0};
    double sigma = std::sqrt(2.0 / 9.0);
    double hi = (1.0 - 1.0 / 3.0) / sigma;
    double lo = (0.0 - 1.0 / 3.0) / sigma;
    CHECK(hi == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(lo == doctest::Approx(-std::sqrt(2.0) / 2.0).epsilon(1e-12));
    AdvantageResult r = group_advantages(rewards);
    for (int i = 0; i < 2; ++i) {
      CHECK(r.advantages[i] == doctest::Approx(1.414214).epsilon(1e-4));
    }
    for (int i = 2; i < 6; ++i) {
      CHECK(r.advantages[i] == doctest::Approx(-0.707107).epsilon(1e-4));
    }
  }
  std::vector<double> single = {1.0};
  CHECK_THROWS(group_advantages(single));
}

TEST_CASE("non-degenerate advantages normalize to mean 0, population std 1") {
  Rng rng(23);
  int tested = 0;
  while (tested < 1000) {
    int g = 2 + rng.uniform_int(9);
    std::vector<double> rewards(g);
    for (double& r : rewards) r = rng.uniform01() * 2.0;
    AdvantageResult res = group_advantages(rewards);
    if (res.degenerate) continue;
    ++tested;
    CHECK(std::abs(stats::mean(res.advantages)) <= 1e-9);
    CHECK(std::abs(stats::population_stddev(res.advantages) - 1.0) <= 1e-9);
  }
}

TEST_CASE("near-zero spread triggers the degenerate rule") {
  std::vector<double> rewards = {0.5, 0.5 + 1e-13, 0.5};
  AdvantageResult r = group_advantages(rewards);
  CHECK(r.degenerate);
  for (double a : r.advantages) CHECK(a == 0.0);
}
