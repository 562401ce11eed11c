#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "realsub/embedding.hpp"

namespace realsub {

/// Squared L2 distance; float inputs, double accumulation.
double squared_l2(std::span<const float> p, std::span<const float> q);

/// Euclidean distance. Throws Invariant on dimension mismatch.
double euclidean(std::span<const float> p, std::span<const float> q);

struct DistanceRecord {
  std::string query_id;
  std::string neighbor_id;
  double distance = 0.0;

  bool operator==(const DistanceRecord&) const = default;
};

enum class IndexMode { Exact, Ivf };

std::string_view to_string(IndexMode m);
IndexMode parse_index_mode(std::string_view s);

struct IndexParams {
  IndexMode mode = IndexMode::Exact;
  /// Centroid count for IVF; 0 selects ceil(sqrt(rows)).
  std::size_t centroids = 0;
  /// Clamped to the centroid count.
  std::size_t nprobe = 8;
  std::uint64_t seed = 42;
  std::size_t max_iterations = 25;
  double tolerance = 1e-4;
};

/// Nearest reference row for one query.
struct Hit {
  std::size_t row = 0;
  double distance = 0.0;
};

/// 1-NN search structure over a reference matrix. Immutable once built;
/// search is safe from any number of threads.
class NeighborIndex {
 public:
  IndexMode mode() const { return mode_; }
  const EmbeddingMatrix& reference() const { return reference_; }
  std::size_t dim() const { return reference_.dim(); }
  std::size_t centroid_count() const { return lists_.size(); }
  std::size_t nprobe() const { return nprobe_; }
  std::span<const float> centroid(std::size_t c) const { return {centroids_.data() + c * dim(), dim()}; }
  const std::vector<std::uint32_t>& assignments() const { return assignments_; }
  const std::vector<std::vector<std::uint32_t>>& posting_lists() const { return lists_; }

  /// One hit per query row. `nprobe` overrides the index default (IVF only).
  std::vector<Hit> search(const EmbeddingMatrix& queries, std::optional<std::size_t> nprobe = std::nullopt) const;

  friend NeighborIndex build_index(EmbeddingMatrix reference, const IndexParams& params);
  friend std::string encode_index(const NeighborIndex& index);
  friend NeighborIndex decode_index(std::string_view bytes, std::string_view origin);

 private:
  void search_exact(const EmbeddingMatrix& queries, std::vector<Hit>& out) const;
  void search_ivf(const EmbeddingMatrix& queries, std::size_t nprobe, std::vector<Hit>& out) const;
  void rebuild_lists(std::size_t centroid_count);

  EmbeddingMatrix reference_;
  IndexMode mode_ = IndexMode::Exact;
  std::vector<float> centroids_;
  std::vector<std::uint32_t> assignments_;
  std::vector<std::vector<std::uint32_t>> lists_;
  std::size_t nprobe_ = 1;
};

/// Exact mode keeps the matrix flat. IVF runs seeded k-means++ and Lloyd
/// iterations (stopping when every centroid moves less than `tolerance`,
/// or after `max_iterations`) and builds one posting list per centroid.
NeighborIndex build_index(EmbeddingMatrix reference, const IndexParams& params);

/// One record per query row, in query order. Ties on distance go to the
/// smaller reference row.
std::vector<DistanceRecord> nearest(const NeighborIndex& index, const EmbeddingMatrix& queries,
                                    std::optional<std::size_t> nprobe = std::nullopt);

/// Share of queries whose approximate distance matches the exact one within
/// 1e-5 relative. Both lists must cover the same queries in the same order.
double recall_at_1(const std::vector<DistanceRecord>& approx, const std::vector<DistanceRecord>& exact);

std::string encode_index(const NeighborIndex& index);
NeighborIndex decode_index(std::string_view bytes, std::string_view origin = "<memory>");
void save_index(const NeighborIndex& index, const std::filesystem::path& path);
NeighborIndex load_index(const std::filesystem::path& path);

/// CSV `query_id,neighbor_id,distance`, distance with 6 decimals.
std::string format_distances(const std::vector<DistanceRecord>& records);
void save_distances(const std::vector<DistanceRecord>& records, const std::filesystem::path& path);
std::vector<DistanceRecord> parse_distances(std::string_view content, std::string_view origin = "<memory>");
std::vector<DistanceRecord> load_distances(const std::filesystem::path& path);

}  // namespace realsub
