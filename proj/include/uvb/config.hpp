#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uvb/data.hpp"
#include "uvb/errors.hpp"

namespace uvb {

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}
}  // namespace detail

// Flat `key = value` store. Lines may carry '#' comments; later assignments
// win, which is how command-line overrides are layered on top of a file.
class Config {
 public:
  static Config from_text(const std::string& text, const std::string& origin = "<text>") {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected 'key = value', got '" + line + "'");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string val = detail::trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      c.kv_[key] = val;
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : parse_double(key, it->second);
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& s = it->second;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
      throw ConfigError("config: key '" + key + "' is not an integer: '" + s + "'");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + s + "'");
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<int> out;
    for (const std::string& tok : split_list(it->second, ',')) {
      if (tok.empty()) continue;
      char* end = nullptr;
      const long v = std::strtol(tok.c_str(), &end, 10);
      if (end == tok.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' has a non-integer entry '" + tok + "'");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    for (const std::string& tok : split_list(it->second, ','))
      if (!tok.empty()) out.push_back(parse_double(key, tok));
    return out;
  }

  // Semicolon-separated vectors with comma-separated components:
  // "0.2,0.2 ; 0.8,0.8".
  std::vector<std::vector<double>> get_vector_list(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
    std::vector<std::vector<double>> out;
    for (const std::string& group : split_list(it->second, ';')) {
      std::vector<double> vec;
      for (const std::string& tok : split_list(group, ','))
        if (!tok.empty()) vec.push_back(parse_double(key, tok));
      if (!vec.empty()) out.push_back(std::move(vec));
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // Canonical text form: sorted key = value lines (the checkpoint echo).
  std::string to_text() const {
    std::ostringstream out;
    for (const auto& [k, v] : kv_) out << k << " = " << v << '\n';
    return out.str();
  }

 private:
  static double parse_double(const std::string& key, const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
      throw ConfigError("config: key '" + key + "' is not a number: '" + s + "'");
    return v;
  }

  static std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t next = s.find(sep, pos);
      if (next == std::string::npos) next = s.size();
      out.push_back(detail::trim(s.substr(pos, next - pos)));
      if (next == s.size()) break;
      pos = next + 1;
    }
    return out;
  }

  std::map<std::string, std::string> kv_;
};

// Mixture description from config keys gmm_weights, gmm_means, gmm_var.
inline GmmSpec gmm_from_config(const Config& c) {
  GmmSpec spec;
  spec.means = c.get_vector_list("gmm_means");
  spec.weights = c.get_double_list("gmm_weights", {});
  if (spec.weights.empty())
    spec.weights.assign(spec.means.size(), 1.0 / static_cast<double>(spec.means.size()));
  spec.var = c.get_double("gmm_var", 0.0);
  spec.validate();
  return spec;
}

}  // namespace uvb
