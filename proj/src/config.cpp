#include "realsub/config.hpp"

#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "realsub/dataset.hpp"
#include "realsub/error.hpp"

namespace realsub {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::string_view where, bool bare_strings)
      : s_(text), where_(where), bare_strings_(bare_strings) {}

  ConfigValue parse() {
    skip_ws();
    ConfigValue v;
    if (peek() == '[') {
      ++pos_;
      std::vector<ConfigValue::Scalar> items;
      skip_ws();
      if (peek() == ']') {
        ++pos_;
      } else {
        while (true) {
          items.push_back(scalar(true));
          skip_ws();
          if (peek() == ',') {
            ++pos_;
            skip_ws();
            if (peek() == ']') {
              ++pos_;
              break;
            }
            continue;
          }
          if (peek() == ']') {
            ++pos_;
            break;
          }
          error("expected ',' or ']' in array");
        }
      }
      v.value = std::move(items);
    } else {
      v.value = scalar(false);
    }
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') error("unexpected trailing characters");
    return v;
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  [[noreturn]] void error(std::string_view what) const {
    fail(ErrorKind::Config, fmt::format("{}: {}", where_, what));
  }

  ConfigValue::Scalar scalar(bool in_array) {
    if (peek() == '"') return quoted();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           !(in_array && std::isspace(static_cast<unsigned char>(s_[pos_]))))
      ++pos_;
    const auto word = trim(s_.substr(start, pos_ - start));
    if (word.empty()) error("missing value");
    if (word == "true") return true;
    if (word == "false") return false;
    std::int64_t i = 0;
    auto [pi, ei] = std::from_chars(word.data(), word.data() + word.size(), i);
    if (ei == std::errc{} && pi == word.data() + word.size()) return i;
    double d = 0;
    auto [pd, ed] = std::from_chars(word.data(), word.data() + word.size(), d);
    if (ed == std::errc{} && pd == word.data() + word.size()) return d;
    if (bare_strings_) return std::string(word);
    error(fmt::format("cannot parse value '{}' (strings must be quoted)", word));
  }

  std::string quoted() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: error(fmt::format("unknown escape \\{}", e));
        }
      } else {
        out += c;
      }
    }
    if (peek() != '"') error("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::string_view where_;
  bool bare_strings_;
  std::size_t pos_ = 0;
};

std::string render(const ConfigValue::Scalar& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          std::string out = "\"";
          for (char c : v) {
            if (c == '"' || c == '\\') out += '\\';
            if (c == '\n') {
              out += "\\n";
              continue;
            }
            out += c;
          }
          return out + "\"";
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else {
          return fmt::format("{}", v);
        }
      },
      s);
}

const ConfigValue::Scalar* scalar_of(const std::map<std::string, ConfigValue>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) return nullptr;
  const auto* s = std::get_if<ConfigValue::Scalar>(&it->second.value);
  if (s == nullptr) fail(ErrorKind::Config, fmt::format("config key '{}' must be a scalar, not an array", key));
  return s;
}

[[noreturn]] void type_error(const std::string& key, std::string_view want) {
  fail(ErrorKind::Config, fmt::format("config key '{}' must be {}", key, want));
}

}  // namespace

ConfigDoc ConfigDoc::parse(std::string_view text, std::string_view origin) {
  ConfigDoc doc;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    const auto where = fmt::format("{}:{}", origin, line_no);
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) fail(ErrorKind::Config, where + ": unterminated section header");
      const auto name = trim(line.substr(1, close - 1));
      if (!valid_key(name)) fail(ErrorKind::Config, fmt::format("{}: bad section name '{}'", where, name));
      const auto rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') fail(ErrorKind::Config, where + ": text after section header");
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::Config, where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(ErrorKind::Config, fmt::format("{}: bad key '{}'", where, key));
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (doc.values_.contains(full)) fail(ErrorKind::Config, fmt::format("{}: duplicate key '{}'", where, full));
    doc.values_[full] = ValueParser(line.substr(eq + 1), where, false).parse();
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Config, "config file not found: " + path.string());
  return parse(read_file(path), path.string());
}

void ConfigDoc::set(const std::string& key, std::string_view literal) {
  values_[key] = ValueParser(literal, fmt::format("override {}", key), true).parse();
}

std::vector<std::string> ConfigDoc::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::optional<std::string> ConfigDoc::get_string(const std::string& key) const {
  const auto* s = scalar_of(values_, key);
  if (s == nullptr) return std::nullopt;
  if (const auto* v = std::get_if<std::string>(s)) return *v;
  type_error(key, "a string");
}

std::optional<double> ConfigDoc::get_double(const std::string& key) const {
  const auto* s = scalar_of(values_, key);
  if (s == nullptr) return std::nullopt;
  if (const auto* v = std::get_if<double>(s)) return *v;
  if (const auto* v = std::get_if<std::int64_t>(s)) return static_cast<double>(*v);
  type_error(key, "a number");
}

std::optional<std::int64_t> ConfigDoc::get_int(const std::string& key) const {
  const auto* s = scalar_of(values_, key);
  if (s == nullptr) return std::nullopt;
  if (const auto* v = std::get_if<std::int64_t>(s)) return *v;
  type_error(key, "an integer");
}

std::optional<bool> ConfigDoc::get_bool(const std::string& key) const {
  const auto* s = scalar_of(values_, key);
  if (s == nullptr) return std::nullopt;
  if (const auto* v = std::get_if<bool>(s)) return *v;
  type_error(key, "true or false");
}

std::optional<std::vector<double>> ConfigDoc::get_double_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  std::vector<ConfigValue::Scalar> items;
  if (const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&it->second.value)) {
    items = *arr;
  } else {
    items.push_back(std::get<ConfigValue::Scalar>(it->second.value));
  }
  std::vector<double> out;
  for (const auto& s : items) {
    if (const auto* d = std::get_if<double>(&s)) out.push_back(*d);
    else if (const auto* i = std::get_if<std::int64_t>(&s)) out.push_back(static_cast<double>(*i));
    else type_error(key, "a list of numbers");
  }
  return out;
}

std::optional<std::vector<std::int64_t>> ConfigDoc::get_int_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  std::vector<ConfigValue::Scalar> items;
  if (const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&it->second.value)) {
    items = *arr;
  } else {
    items.push_back(std::get<ConfigValue::Scalar>(it->second.value));
  }
  std::vector<std::int64_t> out;
  for (const auto& s : items) {
    if (const auto* i = std::get_if<std::int64_t>(&s)) out.push_back(*i);
    else type_error(key, "a list of integers");
  }
  return out;
}

std::string ConfigDoc::canonical() const {
  std::string out;
  for (const auto& [key, v] : values_) {
    out += key + " = ";
    if (const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&v.value)) {
      out += "[";
      for (std::size_t i = 0; i < arr->size(); ++i) out += (i ? ", " : "") + render((*arr)[i]);
      out += "]";
    } else {
      out += render(std::get<ConfigValue::Scalar>(v.value));
    }
    out += "\n";
  }
  return out;
}

}  // namespace realsub
