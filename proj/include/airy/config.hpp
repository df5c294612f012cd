#pragma once
// Flat "key = value" configuration files. Keys are dotted ("lattice.K");
// '#' starts a comment; a key may repeat (values accumulate in order).

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "airy/errors.hpp"

namespace airy {

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    std::istringstream in(text);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(no) + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(no) + ": empty key");
      c.values_[key].push_back(val);
    }
    return c;
  }
  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = {value}; }

  const std::string& raw(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    if (it->second.size() != 1) throw ConfigError("key '" + key + "' given more than once");
    return it->second.front();
  }
  std::vector<std::string> all(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
  }

  double get_double(const std::string& key) const { return to_double(raw(key), key); }
  double get_double(const std::string& key, double fallback) const { return has(key) ? get_double(key) : (used_.insert(key), fallback); }
  long long get_int(const std::string& key) const { return to_int(raw(key), key); }
  long long get_int(const std::string& key, long long fallback) const { return has(key) ? get_int(key) : (used_.insert(key), fallback); }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return raw(key);
  }
  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(raw(key), ',')) out.push_back(to_double(item, key));
    return out;
  }

  // Keys present in the file that no accessor asked for.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }
  void reject_unused() const {
    const auto u = unused();
    if (!u.empty()) throw ConfigError("unknown key '" + u.front() + "'");
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }
  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
  }
  static double to_double(const std::string& s, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
    }
  }
  static long long to_int(const std::string& s, const std::string& key) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'");
    return v;
  }

 private:
  std::map<std::string, std::vector<std::string>> values_;
  mutable std::set<std::string> used_;
};

}  // namespace airy
