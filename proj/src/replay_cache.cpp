#include "rpo/replay_cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rpo {

std::string to_string(TruncMode mode) {
  switch (mode) {
    case TruncMode::fixed: return "fixed";
    case TruncMode::half_min: return "half_min";
    case TruncMode::full_min: return "full_min";
  }
  throw std::logic_error("unreachable trunc mode");
}

TruncMode trunc_mode_from_string(const std::string& s) {
  if (s == "fixed") return TruncMode::fixed;
  if (s == "half_min") return TruncMode::half_min;
  if (s == "full_min") return TruncMode::full_min;
  throw std::invalid_argument("unknown truncation mode '" + s + "'");
}

PrefixDraw sample_prefix(std::span<const Token> answer,
                         const TruncationPolicy& trunc,
                         std::optional<std::span<const int>> group_lengths,
                         Rng& rng) {
  if (answer.empty()) {
    throw std::invalid_argument("sample_prefix requires a non-empty answer");
  }
  int L = 0;
  if (trunc.mode == TruncMode::fixed) {
    if (trunc.L_fixed < 0) throw std::invalid_argument("L_fixed must be >= 0");
    L = trunc.L_fixed;
  } else {
    if (!group_lengths || group_lengths->empty()) {
      throw std::invalid_argument(
          "half_min/full_min truncation requires group lengths");
    }
    int mn = *std::min_element(group_lengths->begin(), group_lengths->end());
    L = trunc.mode == TruncMode::half_min ? mn / 2 : mn;
  }
  L = std::clamp(L, 0, static_cast<int>(answer.size()));
  PrefixDraw draw;
  draw.m = rng.uniform_int(L + 1);
  draw.prefix.assign(answer.begin(), answer.end() - draw.m);
  return draw;
}

bool ReplayCache::contains(int question_id) const {
  return entries_.contains(question_id);
}

const CacheEntry& ReplayCache::entry(int question_id) const {
  auto it = entries_.find(question_id);
  if (it == entries_.end()) {
    throw std::out_of_range("cache has no entry for question " +
                            std::to_string(question_id));
  }
  return it->second;
}

const std::vector<Token>& ReplayCache::retrieve(int question_id) const {
  return entry(question_id).answer;
}

void ReplayCache::insert(CacheEntry entry) {
  if (entry.answer.empty()) {
    throw std::invalid_argument("cache entries require a non-empty answer");
  }
  entries_[entry.question_id] = std::move(entry);
}

void ReplayCache::update(int question_id, const RolloutGroup& group,
                         double epsilon, bool guard, int64_t step, Rng& rng) {
  if (group.responses.empty()) {
    throw std::invalid_argument("cache update requires a non-empty group");
  }
  int g = group.size();
  int best = 0;
  for (int i = 1; i < g; ++i) {
    if (group.shaped_rewards[i] > group.shaped_rewards[best]) best = i;
  }
  int selected = best;
  double u = rng.uniform01_open_closed();
  if (u > epsilon && g > 1) {
    int pick = rng.uniform_int(g - 1);
    selected = pick < best ? pick : pick + 1;
  }
  const Response& resp = group.responses[selected];
  if (resp.tokens.empty()) return;
  double base = group.raw_rewards[selected];
  auto it = entries_.find(question_id);
  if (it != entries_.end() && guard && base < it->second.reward_at_insert) {
    return;
  }
  CacheEntry e;
  e.question_id = question_id;
  e.answer = resp.tokens;
  e.reward_at_insert = base;
  e.step_inserted = step;
  entries_[question_id] = std::move(e);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ReplayCache::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "rpo-cache v1 " << entries_.size() << '\n';
  for (const auto& [id, e] : entries_) {
    out << id << '\t' << format_double(e.reward_at_insert) << '\t'
        << e.step_inserted << '\t';
    for (size_t i = 0; i < e.answer.size(); ++i) {
      if (i > 0) out << ' ';
      out << e.answer[i];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ReplayCache ReplayCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cache: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("cache file is empty: " + path);
  }
  size_t declared = 0;
  {
    std::stringstream ss(line);
    std::string magic, version;
    if (!(ss >> magic >> version >> declared) || magic != "rpo-cache" ||
        version != "v1") {
      throw std::runtime_error("cache line 1: bad header '" + line + "'");
    }
  }
  ReplayCache cache;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) {
      throw std::runtime_error("cache line " + std::to_string(line_no) +
                               ": expected 4 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    CacheEntry e;
    try {
      e.question_id = std::stoi(fields[0]);
      e.reward_at_insert = std::stod(fields[1]);
      e.step_inserted = std::stoll(fields[2]);
    } catch (const std::exception&) {
      throw std::runtime_error("cache line " + std::to_string(line_no) +
                               ": bad numeric field");
    }
    std::stringstream toks(fields[3]);
    std::string tok;
    while (toks >> tok) {
      try {
        size_t pos = 0;
        int t = std::stoi(tok, &pos);
        if (pos != tok.size() || t < 0) throw std::invalid_argument(tok);
        e.answer.push_back(t);
      } catch (const std::exception&) {
        throw std::runtime_error("cache line " + std::to_string(line_no) +
                                 ": bad token id '" + tok + "'");
      }
    }
    if (e.answer.empty()) {
      throw std::runtime_error("cache line " + std::to_string(line_no) +
                               ": empty answer");
    }
    if (cache.entries_.contains(e.question_id)) {
      throw std::runtime_error("cache line " + std::to_string(line_no) +
                               ": duplicate question id " +
                               std::to_string(e.question_id));
    }
    cache.insert(std::move(e));
  }
  if (cache.size() != declared) {
    throw std::runtime_error("cache header declares " +
                             std::to_string(declared) + " entries, found " +
                             std::to_string(cache.size()));
  }
  return cache;
}

ReplayCache init_cache(std::span<const TaskInstance> dataset,
                       const NgramPolicy& policy, const InitCacheConfig& cfg) {
  if (dataset.empty()) {
    throw std::invalid_argument("init_cache requires a non-empty dataset");
  }
  Rng rng(derive_seed(cfg.seed, 0x1715CACEULL));
  ReplayCache cache;
  for (const TaskInstance& inst : dataset) {
    SampleResult s =
        policy.sample(inst.prompt, cfg.temperature, cfg.max_gen_len, rng);
    Response resp;
    resp.tokens = std::move(s.tokens);
    resp.prefix_len = 0;
    resp.decode_len = resp.total_len();
    resp.terminated = s.terminated;
    CacheEntry e;
    e.question_id = inst.id;
    e.reward_at_insert = verify(inst, resp);
    e.answer = std::move(resp.tokens);
    e.step_inserted = 0;
    cache.insert(std::move(e));
  }
  return cache;
}

}  // namespace rpo
