#pragma once

// Line-oriented `key = value` configuration files. `#` starts a comment.
// Every accessor records the keys it touched so callers can reject typos
// with `require_all_used()`.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/text.hpp"

namespace fairaudit {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      std::string_view body = text::trim(std::string_view(line).substr(0, hash));
      if (body.empty()) continue;
      auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw SchemaError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      std::string key(text::trim(body.substr(0, eq)));
      std::string value(text::trim(body.substr(eq + 1)));
      if (key.empty()) throw SchemaError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (cfg.values_.contains(key)) {
        throw SchemaError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      }
      cfg.order_.push_back(key);
      cfg.values_.emplace(std::move(key), std::move(value));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    auto cfg = parse(in, path.string());
    cfg.base_dir_ = path.parent_path();
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> find(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    auto d = csv::parse_double(*v);
    if (!d) throw SchemaError(origin_ + ": key '" + key + "' is not a number: " + *v);
    return *d;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    auto d = csv::parse_int<long long>(*v);
    if (!d) throw SchemaError(origin_ + ": key '" + key + "' is not an integer: " + *v);
    return *d;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    return parse_bool(key, *v);
  }

  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    return text::split_list(*v);
  }

  // Keys in file order, optionally restricted to a dotted prefix.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
  }

  void require_all_used() const {
    for (const auto& k : order_) {
      if (!used_.contains(k)) throw SchemaError(origin_ + ": unknown key '" + k + "'");
    }
  }

  // Resolves a path value relative to the directory of the loaded file.
  std::filesystem::path resolve(const std::string& value) const {
    std::filesystem::path p(value);
    if (p.is_relative() && !base_dir_.empty()) return base_dir_ / p;
    return p;
  }

  const std::string& origin() const { return origin_; }

  bool parse_bool(const std::string& key, const std::string& v) const {
    const auto f = text::fold(v);
    if (f == "true" || f == "1" || f == "yes") return true;
    if (f == "false" || f == "0" || f == "no") return false;
    throw SchemaError(origin_ + ": key '" + key + "' is not a boolean: " + v);
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;
  std::string origin_ = "<config>";
  std::filesystem::path base_dir_;
};

}  // namespace fairaudit
