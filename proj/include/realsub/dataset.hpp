#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace realsub {

enum class CorpusKind { Unrealistic, RealWorld };

std::string_view to_string(CorpusKind kind);
CorpusKind parse_corpus_kind(std::string_view s);

/// One program/function with a binary defect label (1 = defective).
struct Sample {
  std::string id;
  std::string text;
  int label = 0;
  std::string source;

  bool operator==(const Sample&) const = default;
};

struct CorpusManifest {
  std::size_t sample_count = 0;
  std::string content_digest;
  std::string created_at;
  bool dedup_applied = false;
  double dedup_threshold = 0.0;
};

/// An ordered, immutable-after-load collection of samples.
class Corpus {
 public:
  Corpus() = default;
  /// Validates ids (non-empty, unique) and labels, then computes the manifest.
  Corpus(CorpusKind kind, std::vector<Sample> samples);

  CorpusKind kind() const { return kind_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const CorpusManifest& manifest() const { return manifest_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  /// Row index of an id, if present.
  std::optional<std::size_t> find(std::string_view id) const;
  std::vector<std::string> ids() const;

  /// New corpus holding the given rows, in the given order.
  Corpus subset(const std::vector<std::size_t>& rows) const;

  void mark_dedup(double threshold);
  void set_created_at(std::string ts) { manifest_.created_at = std::move(ts); }

 private:
  CorpusKind kind_ = CorpusKind::Unrealistic;
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
  CorpusManifest manifest_;
};

/// Canonical single-line form of a sample (sorted keys, no whitespace,
/// `source` omitted when empty).
std::string canonical_record(const Sample& s);

/// Newline-delimited JSON records with id/text/label and optional source.
Corpus load_corpus(const std::filesystem::path& path, CorpusKind kind);
Corpus parse_corpus(std::string_view content, CorpusKind kind, std::string_view origin = "<memory>");
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

/// Manifest sidecar (JSON). created_at is deliberately not written so
/// that artifact trees stay byte-reproducible.
void save_manifest(const CorpusManifest& m, const std::filesystem::path& path);

bool is_valid_utf8(std::string_view s);

/// Splits on whitespace and ASCII punctuation; punctuation is dropped,
/// case preserved. Tokens are returned in text order (a multiset).
std::vector<std::string> tokenize(std::string_view text);

/// Same split rule, returning views into `text`.
std::vector<std::string_view> tokenize_views(std::string_view text);

/// Set-semantics Jaccard similarity; two empty token sets score 1.0.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct DedupResult {
  Corpus kept;
  std::vector<std::string> removed_ids;
};

/// Greedy first-wins near-duplicate removal: a sample is dropped iff its
/// Jaccard similarity to some already-kept sample is >= threshold.
DedupResult dedup(const Corpus& corpus, double threshold);

void save_id_list(const std::vector<std::string>& ids, const std::filesystem::path& path);
std::vector<std::string> load_id_list(const std::filesystem::path& path);

std::string utc_timestamp();

/// Reads a whole file; throws InputData on failure.
std::string read_file(const std::filesystem::path& path);
/// Writes a whole file; throws InputData on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace realsub
