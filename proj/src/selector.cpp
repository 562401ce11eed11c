#include "realsub/selector.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "realsub/error.hpp"
#include "realsub/rng.hpp"

namespace realsub {

std::size_t fraction_floor(double fraction, std::size_t n) {
  const double scaled = fraction * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::floor(scaled + 1e-9 * std::max(1.0, scaled)));
  return std::min(k, n);
}

namespace {

void check_fraction(double f, std::string_view name) {
  if (!(f >= 0.0 && f <= 1.0)) fail(ErrorKind::Config, fmt::format("{} = {} outside [0,1]", name, f));
}

}  // namespace

SubsetSpec select_subset(const std::vector<DistanceRecord>& records, double phi) {
  if (records.empty()) fail(ErrorKind::InputData, "select_subset: no distance records");
  check_fraction(phi, "phi");

  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].distance != records[b].distance) return records[a].distance < records[b].distance;
    return records[a].query_id < records[b].query_id;
  });
  std::unordered_set<std::string_view> seen;
  for (const auto& r : records)
    if (!seen.insert(r.query_id).second)
      fail(ErrorKind::InputData, fmt::format("duplicate query id '{}' in distance records", r.query_id));

  SubsetSpec spec;
  spec.manifest.phi = phi;
  spec.manifest.total_count = n;
  if (phi > 0.0) {
    const std::size_t k = std::min(fraction_floor(phi, n), n - 1);
    const double threshold = records[order[k]].distance;
    spec.manifest.threshold = threshold;
    for (std::size_t i : order) {
      if (records[i].distance > threshold) break;
      spec.selected_ids.push_back(records[i].query_id);
    }
  }
  spec.manifest.selected_count = spec.selected_ids.size();
  return spec;
}

SubsetSpec random_subset_of_size(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  const auto rows = sample_without_replacement(corpus.size(), count, seed);
  SubsetSpec spec;
  spec.manifest.total_count = corpus.size();
  spec.manifest.phi = corpus.empty() ? 0.0 : static_cast<double>(rows.size()) / static_cast<double>(corpus.size());
  spec.manifest.threshold = -1.0;
  spec.manifest.random = true;
  spec.manifest.seed_independent = false;
  spec.manifest.seed = seed;
  spec.manifest.unrealistic_digest = corpus.manifest().content_digest;
  for (auto r : rows) spec.selected_ids.push_back(corpus[r].id);
  spec.manifest.selected_count = spec.selected_ids.size();
  return spec;
}

SubsetSpec random_subset(const Corpus& corpus, double fraction, std::uint64_t seed) {
  check_fraction(fraction, "fraction");
  auto spec = random_subset_of_size(corpus, fraction_floor(fraction, corpus.size()), seed);
  spec.manifest.phi = fraction;
  return spec;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_validation_split(std::size_t n, double share,
                                                                                    std::uint64_t seed) {
  check_fraction(share, "validation share");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(rows));
  std::size_t val = fraction_floor(share, n);
  if (n > 0 && val >= n) val = n - 1;
  std::vector<std::size_t> train(rows.begin(), rows.end() - static_cast<std::ptrdiff_t>(val));
  std::vector<std::size_t> validation(rows.end() - static_cast<std::ptrdiff_t>(val), rows.end());
  return {std::move(train), std::move(validation)};
}

EmitResult emit_subset(const Corpus& corpus, const SubsetSpec& spec, const std::filesystem::path& path,
                       const EmitOptions& options) {
  std::vector<std::size_t> rows;
  rows.reserve(spec.selected_ids.size());
  for (const auto& id : spec.selected_ids) {
    auto r = corpus.find(id);
    if (!r) fail(ErrorKind::InputData, fmt::format("subset id '{}' is not in the corpus", id));
    rows.push_back(*r);
  }

  EmitResult result;
  result.corpus_path = path;
  result.spec_path = std::filesystem::path(path).replace_extension(".subset");
  save_corpus(corpus.subset(rows), path);
  save_subset_spec(spec, result.spec_path);

  if (options.split) {
    auto [train, val] = train_validation_split(rows.size(), options.validation_share, options.seed);
    auto pick = [&](const std::vector<std::size_t>& positions) {
      std::vector<std::size_t> out;
      out.reserve(positions.size());
      for (auto p : positions) out.push_back(rows[p]);
      return out;
    };
    const auto stem = path.parent_path() / path.stem();
    result.train_path = stem.string() + ".train.jsonl";
    result.validation_path = stem.string() + ".val.jsonl";
    save_corpus(corpus.subset(pick(train)), *result.train_path);
    save_corpus(corpus.subset(pick(val)), *result.validation_path);
    result.train_size = train.size();
    result.validation_size = val.size();
  }
  return result;
}

std::string format_subset_spec(const SubsetSpec& spec) {
  const auto& m = spec.manifest;
  std::string out = "# realsub subset v1\n";
  out += fmt::format("phi: {}\n", m.phi);
  out += fmt::format("threshold: {}\n", m.threshold);
  out += fmt::format("selected_count: {}\n", m.selected_count);
  out += fmt::format("total_count: {}\n", m.total_count);
  out += fmt::format("unrealistic_digest: {}\n", m.unrealistic_digest);
  out += fmt::format("realworld_digest: {}\n", m.realworld_digest);
  out += fmt::format("distance_file_digest: {}\n", m.distance_file_digest);
  out += fmt::format("seed_independent: {}\n", m.seed_independent);
  out += fmt::format("random: {}\n", m.random);
  out += fmt::format("seed: {}\n", m.seed ? std::to_string(*m.seed) : std::string());
  out += "---\n";
  for (const auto& id : spec.selected_ids) out += id + "\n";
  return out;
}

namespace {

template <typename T>
T parse_number(std::string_view s, std::string_view key, std::string_view origin) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(ErrorKind::InputData, fmt::format("{}: bad value '{}' for {}", origin, s, key));
  return v;
}

bool parse_bool(std::string_view s, std::string_view key, std::string_view origin) {
  if (s == "true") return true;
  if (s == "false") return false;
  fail(ErrorKind::InputData, fmt::format("{}: bad boolean '{}' for {}", origin, s, key));
}

}  // namespace

SubsetSpec parse_subset_spec(std::string_view content, std::string_view origin) {
  SubsetSpec spec;
  auto& m = spec.manifest;
  bool in_ids = false;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    if (in_ids) {
      if (!line.empty()) spec.selected_ids.emplace_back(line);
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    if (line == "---") {
      in_ids = true;
      continue;
    }
    const auto colon = line.find(": ");
    const auto key = line.substr(0, colon == std::string_view::npos ? line.size() : colon);
    const auto value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 2);
    if (key == "phi") m.phi = parse_number<double>(value, key, origin);
    else if (key == "threshold") m.threshold = parse_number<double>(value, key, origin);
    else if (key == "selected_count") m.selected_count = parse_number<std::size_t>(value, key, origin);
    else if (key == "total_count") m.total_count = parse_number<std::size_t>(value, key, origin);
    else if (key == "unrealistic_digest") m.unrealistic_digest = value;
    else if (key == "realworld_digest") m.realworld_digest = value;
    else if (key == "distance_file_digest") m.distance_file_digest = value;
    else if (key == "seed_independent") m.seed_independent = parse_bool(value, key, origin);
    else if (key == "random") m.random = parse_bool(value, key, origin);
    else if (key == "seed") {
      if (!value.empty()) m.seed = parse_number<std::uint64_t>(value, key, origin);
    } else {
      fail(ErrorKind::InputData, fmt::format("{}: unknown key '{}'", origin, key));
    }
  }
  if (!in_ids) fail(ErrorKind::InputData, fmt::format("{}: missing '---' separator", origin));
  if (spec.selected_ids.size() != m.selected_count)
    fail(ErrorKind::InputData, fmt::format("{}: header says {} ids, found {}", origin, m.selected_count,
                                           spec.selected_ids.size()));
  return spec;
}

void save_subset_spec(const SubsetSpec& spec, const std::filesystem::path& path) {
  write_file(path, format_subset_spec(spec));
}

SubsetSpec load_subset_spec(const std::filesystem::path& path) {
  return parse_subset_spec(read_file(path), path.string());
}

}  // namespace realsub
