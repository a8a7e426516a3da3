#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "wrnlab/rational.hpp"

namespace wrnlab {

// Flat dotted-key configuration read from "key = value" text. A "[section]"
// header prefixes the keys that follow it with "section.". Lines starting
// with '#' are comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::string& path);

  // "train.inner_attack.steps=10"
  void apply_override(std::string_view assignment);
  void set(const std::string& key, std::string value);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::optional<std::string> find(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::int64_t get_int64(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Rational get_rational(const std::string& key, Rational fallback) const;

  // Keys present but not in `known`; the CLI rejects these before any work.
  std::set<std::string> unknown_keys(const std::set<std::string>& known) const;
  // Throws ValidationError listing the first unknown key.
  void require_known(const std::set<std::string>& known) const;

  // Entries under `prefix.` with the prefix stripped.
  KeyValueConfig subtree(const std::string& prefix) const;

  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Numeric value like "8/255" or "0.1".
double parse_real(std::string_view text, const std::string& key);

}  // namespace wrnlab
