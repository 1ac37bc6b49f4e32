#pragma once

// Flat `key = value` configuration with `#` comments and dotted key
// namespaces. Reads mark keys as consumed; anything left unconsumed is an
// unknown key and a hard error, so experiment records stay auditable.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rpo {

class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  int64_t get_int64(const std::string& key, int64_t fallback) const;
  uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Comma-separated list; empty when the key is absent.
  std::vector<std::string> get_list(const std::string& key) const;

  // Keys never touched by any getter. Call after assembling a typed config.
  std::vector<std::string> unconsumed_keys() const;
  void check_fully_consumed() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string fetch(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace rpo
