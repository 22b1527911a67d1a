#pragma once

// Flat key=value configuration files with environment-variable overrides
// (DMNT_<KEY>). Unknown keys are rejected by name so typos fail loudly.

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dmnt/core.hpp"

namespace dmnt {

class Config {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      auto eq = line.find('=');
      check(eq != std::string::npos,
            "config: missing '=' at " + path + ":" + std::to_string(lineno));
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  // Apply DMNT_<UPPERCASED KEY> environment overrides for known keys.
  void apply_env(const std::set<std::string>& keys) {
    for (const auto& k : keys) {
      std::string env = "DMNT_";
      for (char c : k) env += c == '.' || c == '-' ? '_' : char(std::toupper(c));
      if (const char* v = std::getenv(env.c_str())) kv_[k] = v;
    }
  }

  void validate(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : kv_)
      check(allowed.count(k) != 0, "config: unknown key '" + k + "'");
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  real get_real(const std::string& key, real def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      return real(std::stod(it->second));
    } catch (...) {
      check(false, "config: key '" + key + "' is not a number: " + it->second);
      return def;
    }
  }

  int get_int(const std::string& key, int def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      return std::stoi(it->second);
    } catch (...) {
      check(false, "config: key '" + key + "' is not an integer: " + it->second);
      return def;
    }
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // Stable content hash for reproducibility headers.
  uint64_t hash() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
      }
      h ^= 0xff;
      h *= 1099511628211ull;
    };
    for (const auto& [k, v] : kv_) {
      mix(k);
      mix(v);
    }
    return h;
  }

 private:
  static std::string trim(std::string s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace dmnt
