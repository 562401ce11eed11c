#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "realsub/dataset.hpp"
#include "realsub/knn.hpp"

namespace realsub {

struct SelectionManifest {
  double phi = 0.0;
  /// Distance cut-off; -1 for random selections.
  double threshold = 0.0;
  std::size_t selected_count = 0;
  std::size_t total_count = 0;
  std::string unrealistic_digest;
  std::string realworld_digest;
  std::string distance_file_digest;
  bool seed_independent = true;
  bool random = false;
  std::optional<std::uint64_t> seed;

  bool operator==(const SelectionManifest&) const = default;
};

struct SubsetSpec {
  SelectionManifest manifest;
  /// Percentile selections: ascending by distance, ties by id.
  /// Random selections: corpus order.
  std::vector<std::string> selected_ids;

  bool operator==(const SubsetSpec&) const = default;
};

/// floor(fraction * n), guarded against representation error such as
/// 0.29 * 100 = 28.999999999999996.
std::size_t fraction_floor(double fraction, std::size_t n);

/// Percentile-threshold selection. For phi > 0 the threshold is
/// sorted[min(floor(phi * N), N - 1)] and every record at or below it is
/// kept, so ties at the threshold are all included. phi == 0 selects
/// nothing.
SubsetSpec select_subset(const std::vector<DistanceRecord>& records, double phi);

/// Uniform sample of floor(fraction * N) ids without replacement.
SubsetSpec random_subset(const Corpus& corpus, double fraction, std::uint64_t seed);
/// Uniform sample of exactly `count` ids (clamped to N).
SubsetSpec random_subset_of_size(const Corpus& corpus, std::size_t count, std::uint64_t seed);

struct EmitOptions {
  bool split = false;
  std::uint64_t seed = 0;
  double validation_share = 0.02;
};

struct EmitResult {
  std::filesystem::path corpus_path;
  std::filesystem::path spec_path;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> validation_path;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

/// Writes the selected samples (SubsetSpec order) to `path`, the SubsetSpec as a
/// `.subset` sidecar and, with options.split, seeded train/validation
/// files `<stem>.train.jsonl` / `<stem>.val.jsonl`.
EmitResult emit_subset(const Corpus& corpus, const SubsetSpec& spec, const std::filesystem::path& path,
                       const EmitOptions& options = {});

/// Shuffled (train, validation) row lists; validation gets
/// floor(share * n) rows but train always keeps at least one.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_validation_split(std::size_t n, double share,
                                                                                    std::uint64_t seed);

/// Key-value header, a `---` line, then one id per line.
std::string format_subset_spec(const SubsetSpec& spec);
SubsetSpec parse_subset_spec(std::string_view content, std::string_view origin = "<memory>");
void save_subset_spec(const SubsetSpec& spec, const std::filesystem::path& path);
SubsetSpec load_subset_spec(const std::filesystem::path& path);

}  // namespace realsub
