#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace realsub {

/// A value in a config document: string, integer, float, bool or a
/// flat array of those.
struct ConfigValue {
  using Scalar = std::variant<std::string, std::int64_t, double, bool>;
  std::variant<Scalar, std::vector<Scalar>> value;
};

/// TOML-subset document: `[section]` headers, `key = value` lines,
/// `#` comments, quoted strings, numbers, booleans and single-line arrays.
/// Keys are addressed as "section.key".
class ConfigDoc {
 public:
  static ConfigDoc parse(std::string_view text, std::string_view origin = "<config>");
  static ConfigDoc load(const std::filesystem::path& path);

  /// Sets "section.key" from a value literal, e.g. "0.5", "[1, 2]", "\"x\"".
  /// Bare words that are not numbers or booleans are taken as strings.
  void set(const std::string& key, std::string_view literal);

  bool contains(const std::string& key) const { return values_.contains(key); }
  std::vector<std::string> keys() const;

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  std::optional<std::vector<double>> get_double_list(const std::string& key) const;
  std::optional<std::vector<std::int64_t>> get_int_list(const std::string& key) const;

  /// Deterministic normalized rendering (sorted keys); digested into run logs.
  std::string canonical() const;

 private:
  std::map<std::string, ConfigValue> values_;
};

}  // namespace realsub
