#include "realsub/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "realsub/digest.hpp"
#include "realsub/error.hpp"

namespace realsub {

using nlohmann::json;

std::string_view to_string(CorpusKind kind) {
  return kind == CorpusKind::Unrealistic ? "unrealistic" : "realworld";
}

CorpusKind parse_corpus_kind(std::string_view s) {
  if (s == "unrealistic") return CorpusKind::Unrealistic;
  if (s == "realworld") return CorpusKind::RealWorld;
  fail(ErrorKind::Config, fmt::format("unknown corpus kind '{}'", s));
}

Corpus::Corpus(CorpusKind kind, std::vector<Sample> samples) : kind_(kind), samples_(std::move(samples)) {
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.id.empty()) fail(ErrorKind::InputData, fmt::format("record {}: empty id", i + 1));
    if (s.label != 0 && s.label != 1)
      fail(ErrorKind::InputData, fmt::format("record {} (id '{}'): label {} not in {{0,1}}", i + 1, s.id, s.label));
    if (!index_.emplace(s.id, i).second)
      fail(ErrorKind::InputData, fmt::format("record {}: duplicate id '{}'", i + 1, s.id));
  }
  manifest_.sample_count = samples_.size();
  manifest_.content_digest = to_hex(fnv1a64(serialize_corpus(*this)));
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.id);
  return out;
}

Corpus Corpus::subset(const std::vector<std::size_t>& rows) const {
  std::vector<Sample> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(samples_.at(r));
  Corpus out(kind_, std::move(picked));
  out.manifest_.created_at = manifest_.created_at;
  return out;
}

void Corpus::mark_dedup(double threshold) {
  manifest_.dedup_applied = true;
  manifest_.dedup_threshold = threshold;
}

std::string canonical_record(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["text"] = s.text;
  j["label"] = s.label;
  if (!s.source.empty()) j["source"] = s.source;
  return j.dump();
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples()) {
    out += canonical_record(s);
    out += '\n';
  }
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // Overlong forms, surrogates, out of range.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

Corpus parse_corpus(std::string_view content, CorpusKind kind, std::string_view origin) {
  std::vector<Sample> samples;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;

    if (!is_valid_utf8(line)) fail(ErrorKind::InputData, fmt::format("{}:{}: invalid UTF-8", origin, line_no));
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::InputData, fmt::format("{}:{}: malformed record: {}", origin, line_no, e.what()));
    }
    if (!j.is_object()) fail(ErrorKind::InputData, fmt::format("{}:{}: malformed record: not an object", origin, line_no));

    Sample s;
    auto id = j.find("id");
    if (id == j.end() || !id->is_string())
      fail(ErrorKind::InputData, fmt::format("{}:{}: malformed record: missing string field 'id'", origin, line_no));
    s.id = id->get<std::string>();
    if (s.id.empty()) fail(ErrorKind::InputData, fmt::format("{}:{}: malformed record: empty id", origin, line_no));

    auto text = j.find("text");
    if (text == j.end() || !text->is_string())
      fail(ErrorKind::InputData,
           fmt::format("{}:{}: malformed record '{}': missing string field 'text'", origin, line_no, s.id));
    s.text = text->get<std::string>();

    auto label = j.find("label");
    if (label == j.end() || !label->is_number_integer())
      fail(ErrorKind::InputData,
           fmt::format("{}:{}: malformed record '{}': 'label' must be an integer", origin, line_no, s.id));
    const auto lv = label->get<std::int64_t>();
    if (lv != 0 && lv != 1)
      fail(ErrorKind::InputData,
           fmt::format("{}:{}: record '{}' has label {} (expected 0 or 1)", origin, line_no, s.id, lv));
    s.label = static_cast<int>(lv);

    if (auto src = j.find("source"); src != j.end()) {
      if (!src->is_string())
        fail(ErrorKind::InputData,
             fmt::format("{}:{}: malformed record '{}': 'source' must be a string", origin, line_no, s.id));
      s.source = src->get<std::string>();
    }

    auto [it, inserted] = first_line.emplace(s.id, line_no);
    if (!inserted)
      fail(ErrorKind::InputData, fmt::format("{}:{}: duplicate id '{}' (first seen on line {})", origin, line_no,
                                             s.id, it->second));
    samples.push_back(std::move(s));
  }
  Corpus corpus(kind, std::move(samples));
  corpus.set_created_at(utc_timestamp());
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusKind kind) {
  return parse_corpus(read_file(path), kind, path.string());
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, serialize_corpus(corpus));
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  json j;
  j["sample_count"] = m.sample_count;
  j["content_digest"] = m.content_digest;
  j["dedup_applied"] = m.dedup_applied;
  if (m.dedup_applied) j["dedup_threshold"] = m.dedup_threshold;
  write_file(path, j.dump(2) + "\n");
}

namespace {

bool is_separator(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' ||
         (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
         (c >= 0x7b && c <= 0x7e);
}

}  // namespace

std::vector<std::string_view> tokenize_views(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_separator(static_cast<unsigned char>(text[i]))) {
      if (in_token) out.push_back(text.substr(start, i - start));
      in_token = false;
    } else if (!in_token) {
      start = i;
      in_token = true;
    }
  }
  if (in_token) out.push_back(text.substr(start));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  auto views = tokenize_views(text);
  return {views.begin(), views.end()};
}

namespace {

std::vector<std::string> token_set(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

}  // namespace

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto sa = token_set(a);
  const auto sb = token_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = sa.begin();
  auto ib = sb.begin();
  while (ia != sa.end() && ib != sb.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

DedupResult dedup(const Corpus& corpus, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorKind::Config, fmt::format("dedup threshold {} outside [0,1]", threshold));

  // Token ids per sample, then an inverted index over kept samples so only
  // pairs sharing at least one token are scored. Disjoint pairs score 0,
  // which only matters when threshold == 0.
  std::unordered_map<std::string_view, std::uint32_t> vocab;
  std::vector<std::vector<std::uint32_t>> postings;
  std::vector<std::size_t> kept_rows;
  std::vector<std::size_t> kept_set_size;
  std::vector<std::uint32_t> overlap;
  std::vector<std::size_t> touched;
  bool kept_empty = false;

  DedupResult result;
  for (std::size_t row = 0; row < corpus.size(); ++row) {
    std::vector<std::uint32_t> ids;
    for (auto tok : tokenize_views(corpus[row].text)) {
      auto [it, inserted] = vocab.emplace(tok, static_cast<std::uint32_t>(vocab.size()));
      if (inserted) postings.emplace_back();
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    bool duplicate = false;
    if (threshold <= 0.0) {
      duplicate = !kept_rows.empty();
    } else if (ids.empty()) {
      duplicate = kept_empty;
    } else {
      touched.clear();
      for (auto t : ids) {
        for (auto k : postings[t]) {
          if (overlap[k]++ == 0) touched.push_back(k);
        }
      }
      for (auto k : touched) {
        const std::size_t inter = overlap[k];
        const std::size_t uni = ids.size() + kept_set_size[k] - inter;
        if (static_cast<double>(inter) / static_cast<double>(uni) >= threshold) duplicate = true;
        overlap[k] = 0;
      }
    }

    if (duplicate) {
      result.removed_ids.push_back(corpus[row].id);
      continue;
    }
    const auto k = static_cast<std::uint32_t>(kept_rows.size());
    kept_rows.push_back(row);
    kept_set_size.push_back(ids.size());
    overlap.push_back(0);
    if (ids.empty()) kept_empty = true;
    for (auto t : ids) postings[t].push_back(k);
  }

  result.kept = corpus.subset(kept_rows);
  result.kept.mark_dedup(threshold);
  return result;
}

void save_id_list(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::string out;
  for (const auto& id : ids) {
    out += id;
    out += '\n';
  }
  write_file(path, out);
}

std::vector<std::string> load_id_list(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", now);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::InputData, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::InputData, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::InputData, "write failed for " + path.string());
}

}  // namespace realsub
