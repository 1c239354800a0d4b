#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "stvsr/common.hpp"

namespace stvsr {

// Flat key=value config with [section] headers. Keys are stored as
// "section.key" ("key" before any section); later assignments win.
class Config {
 public:
  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (std::size_t h = line.find('#'); h != std::string::npos) line.erase(h);
      std::string s = trim(line);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3)
          throw ConfigError("config line " + std::to_string(lineno) +
                            ": malformed section header");
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      std::size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key=value");
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      c.kv_[section.empty() ? key : section + "." + key] = val;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  void set(const std::string& key, const std::string& val) { kv_[key] = val; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  std::string require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : to_double(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : to_int(key, it->second);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(it->second.data(),
                                   it->second.data() + it->second.size(), v);
    if (ec != std::errc{} || p != it->second.data() + it->second.size())
      throw ConfigError("config: key '" + key + "' is not an unsigned integer: " +
                        it->second);
    return v;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
  }

  // Canonical "k=v;..." string over sorted keys; identifies the exact
  // configuration in reports.
  std::string fingerprint() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
      if (!out.empty()) out += ';';
      out += k + "=" + v;
    }
    return out;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static double to_double(const std::string& key, const std::string& v) {
    double x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size())
      throw ConfigError("config: key '" + key + "' is not a number: " + v);
    return x;
  }

  static std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size())
      throw ConfigError("config: key '" + key + "' is not an integer: " + v);
    return x;
  }
};

}  // namespace stvsr
