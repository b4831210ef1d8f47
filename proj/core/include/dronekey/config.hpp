#pragma once

#include <map>
#include <set>
#include <string>

#include "dronekey/errors.hpp"

namespace dronekey {

/// Flat string key/value store backing the CLI configuration. Values keep
/// their textual form; typed getters parse on access and throw ConfigError
/// on bad types or missing required keys.
class ConfigMap {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws ConfigError naming the first key absent from `known`.
  void require_known(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Parses `key = value` lines. '#' starts a full-line comment; blank lines
/// are skipped; `include <path>` splices another file (relative to the
/// including one) with later assignments overriding earlier ones. Include
/// depth is capped at 8. Malformed lines raise ParseError with the line
/// number.
void parse_config_file(const std::string& path, ConfigMap& out, int depth = 0);
ConfigMap parse_config_file(const std::string& path);

/// Parses a `key=value` override as passed on the command line.
void apply_override(ConfigMap& cfg, const std::string& assignment);

/// Sorted `key = value` echo; output is re-parseable by parse_config_file.
void write_config(const std::string& path, const ConfigMap& cfg);

}  // namespace dronekey
