#include "rpo/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rpo {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Config parse_lines(std::istream& in, const std::string& origin) {
  Config cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                               ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                               ": empty key");
    }
    if (cfg.has(key)) {
      throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                               ": duplicate key '" + key + "'");
    }
    cfg.set(key, value);
  }
  return cfg;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_lines(in, path);
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse_lines(in, "<config>");
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool Config::has(const std::string& key) const {
  return values_.contains(key);
}

std::string Config::fetch(const std::string& key) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return "";
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  std::string v = fetch(key);
  return has(key) ? v : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
  int64_t v = get_int64(key, fallback);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw std::runtime_error("config key '" + key + "' out of int range");
  }
  return static_cast<int>(v);
}

int64_t Config::get_int64(const std::string& key, int64_t fallback) const {
  std::string v = fetch(key);
  if (!has(key)) return fallback;
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': bad integer '" + v +
                             "'");
  }
}

uint64_t Config::get_uint64(const std::string& key, uint64_t fallback) const {
  std::string v = fetch(key);
  if (!has(key)) return fallback;
  try {
    // stoull wraps negatives around instead of failing; reject them here.
    if (v.find('-') != std::string::npos) throw std::invalid_argument(v);
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': bad integer '" + v +
                             "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  std::string v = fetch(key);
  if (!has(key)) return fallback;
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': bad number '" + v +
                             "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  std::string v = fetch(key);
  if (!has(key)) return fallback;
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::runtime_error("config key '" + key + "': bad boolean '" + v +
                           "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::string v = fetch(key);
  std::vector<std::string> out;
  if (!has(key)) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> Config::unconsumed_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!consumed_.contains(k)) out.push_back(k);
  }
  return out;
}

void Config::check_fully_consumed() const {
  std::vector<std::string> unknown = unconsumed_keys();
  if (unknown.empty()) return;
  std::string msg = "unknown config key(s):";
  for (const std::string& k : unknown) msg += " '" + k + "'";
  throw std::runtime_error(msg);
}

}  // namespace rpo
