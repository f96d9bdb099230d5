#pragma once

// Flat `key = value` run configuration validated against a per-command schema.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/io.hpp"

namespace wpp {

struct ConfigKey {
  std::string name;
  std::string default_value;  // empty string means "unset"
  std::string help;
};

class RunConfig {
 public:
  explicit RunConfig(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
    for (const auto& k : schema_) values_[k.name] = k.default_value;
  }

  const std::vector<ConfigKey>& schema() const { return schema_; }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown key '" + key + "'");
    values_[key] = value;
  }

  /// Applies a config file; unknown or repeated keys are rejected.
  void load_file(const std::filesystem::path& path) {
    std::map<std::string, int> seen;
    for (const auto& [k, v] : io::read_key_values(path)) {
      if (seen[k]++) throw ConfigError(path.string() + ": duplicate key '" + k + "'");
      if (!values_.count(k)) throw ConfigError(path.string() + ": unknown key '" + k + "'");
      values_[k] = v;
    }
  }

  bool has(const std::string& key) const { return !raw(key).empty(); }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("key '" + key + "' not in schema");
    return it->second;
  }

  std::string str(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required key '" + key + "'");
    return raw(key);
  }

  double real(const std::string& key) const {
    const std::string s = str(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::logic_error&) {
      throw ConfigError("key '" + key + "': '" + s + "' is not a number");
    }
    if (used != s.size() || !std::isfinite(v)) throw ConfigError("key '" + key + "': '" + s + "' is not a finite number");
    return v;
  }

  long long integer(const std::string& key) const {
    const std::string s = str(key);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::logic_error&) {
      throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
    }
    if (used != s.size()) throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
    return v;
  }

  long long integer_at_least(const std::string& key, long long lo) const {
    const auto v = integer(key);
    if (v < lo) throw ConfigError("key '" + key + "' must be >= " + std::to_string(lo));
    return v;
  }

  double real_at_least(const std::string& key, double lo, bool strict = false) const {
    const double v = real(key);
    if (strict ? !(v > lo) : !(v >= lo))
      throw ConfigError("key '" + key + "' must be " + (strict ? "> " : ">= ") + io::format_double(lo));
    return v;
  }

  std::uint64_t seed(const std::string& key) const {
    return static_cast<std::uint64_t>(integer_at_least(key, 0));
  }

  bool boolean(const std::string& key) const {
    const std::string s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("key '" + key + "': '" + s + "' is not a boolean");
  }

  std::string choice(const std::string& key, const std::vector<std::string>& allowed) const {
    const std::string s = str(key);
    for (const auto& a : allowed)
      if (a == s) return s;
    throw ConfigError("key '" + key + "': unsupported value '" + s + "'");
  }

 private:
  std::vector<ConfigKey> schema_;
  std::map<std::string, std::string> values_;
};

}  // namespace wpp
