#include "wrnlab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wrnlab/errors.hpp"

namespace wrnlab {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double parse_real(std::string_view text, const std::string& key) {
  text = trim(text);
  auto parse_one = [&](std::string_view part) {
    double v = 0;
    const std::string buf(trim(part));
    std::size_t used = 0;
    try {
      v = std::stod(buf, &used);
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "': not a number: " + std::string(text));
    }
    if (used != buf.size()) throw ValidationError("config key '" + key + "': not a number: " + std::string(text));
    return v;
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    const double den = parse_one(text.substr(slash + 1));
    if (den == 0) throw ValidationError("config key '" + key + "': zero denominator");
    return parse_one(text.substr(0, slash)) / den;
  }
  return parse_one(text);
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("config line " + std::to_string(line_no) + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.entries_[key] = std::string(trim(line.substr(eq + 1)));
    if (end == text.size()) break;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValueConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ValidationError("invalid override '" + std::string(assignment) + "', expected key=value");
  }
  entries_[std::string(trim(assignment.substr(0, eq)))] = std::string(trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

std::int64_t KeyValueConfig::get_int64(const std::string& key, std::int64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto* b = v->data();
  const auto* e = v->data() + v->size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) throw ValidationError("config key '" + key + "': not an integer: " + *v);
  return out;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  return static_cast<int>(get_int64(key, fallback));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? parse_real(*v, key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("config key '" + key + "': not a boolean: " + *v);
}

Rational KeyValueConfig::get_rational(const std::string& key, Rational fallback) const {
  auto v = find(key);
  return v ? Rational::parse(*v) : fallback;
}

std::set<std::string> KeyValueConfig::unknown_keys(const std::set<std::string>& known) const {
  std::set<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!known.count(k)) out.insert(k);
  return out;
}

void KeyValueConfig::require_known(const std::set<std::string>& known) const {
  auto unknown = unknown_keys(known);
  if (!unknown.empty()) throw ValidationError("unknown config key '" + *unknown.begin() + "'");
}

KeyValueConfig KeyValueConfig::subtree(const std::string& prefix) const {
  KeyValueConfig out;
  const std::string p = prefix + ".";
  for (const auto& [k, v] : entries_)
    if (k.rfind(p, 0) == 0) out.entries_[k.substr(p.size())] = v;
  return out;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace wrnlab
