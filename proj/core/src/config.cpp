#include "dronekey/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace dronekey {

namespace {

constexpr int kMaxIncludeDepth = 8;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::string& ConfigMap::get_str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key) const {
  const std::string& s = get_str(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "' is not a number: '" + s + "'");
  return v;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long ConfigMap::get_long(const std::string& key) const {
  const std::string& s = get_str(key);
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "' is not an integer: '" + s + "'");
  return v;
}

long ConfigMap::get_long(const std::string& key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

bool ConfigMap::get_bool(const std::string& key) const {
  const std::string& s = get_str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + s + "'");
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void ConfigMap::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (known.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
}

void parse_config_file(const std::string& path, ConfigMap& out, int depth) {
  if (depth > kMaxIncludeDepth)
    throw ParseError("config include depth exceeds " + std::to_string(kMaxIncludeDepth) +
                     " at " + path);
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open config: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("include ", 0) == 0) {
      const std::string inc = trim(t.substr(8));
      if (inc.empty()) throw ParseError(lineno, path + ": include without a path");
      fs::path target(inc);
      if (target.is_relative()) target = fs::path(path).parent_path() / target;
      parse_config_file(target.string(), out, depth + 1);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(lineno, path + ": expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, path + ": empty key");
    out.set(key, value);
  }
}

ConfigMap parse_config_file(const std::string& path) {
  ConfigMap out;
  parse_config_file(path, out, 0);
  return out;
}

void apply_override(ConfigMap& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + assignment + "'");
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void write_config(const std::string& path, const ConfigMap& cfg) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  for (const auto& [key, value] : cfg.entries()) f << key << " = " << value << "\n";
  if (!f) throw LoadError("write failed: " + path);
}

}  // namespace dronekey
