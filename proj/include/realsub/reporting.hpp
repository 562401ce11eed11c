#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "realsub/embedding.hpp"
#include "realsub/knn.hpp"

namespace realsub {

struct Histogram {
  std::vector<double> bin_edges;  // B + 1 strictly ascending edges
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  /// Distances at the 10/25/50/75th percentiles, using the selector's
  /// index rule.
  double p10 = 0, p25 = 0, p50 = 0, p75 = 0;
};

/// Equal-width bins over [min, max], last bin closed on the right.
Histogram histogram(const std::vector<DistanceRecord>& records, std::size_t bins);

struct PercentileRow {
  double phi = 0;
  double threshold = 0;
  std::size_t count = 0;
};

/// One row per phi (sorted ascending) with select_subset semantics.
std::vector<PercentileRow> percentile_table(const std::vector<DistanceRecord>& records, std::vector<double> phis);

enum class ProjectionSet { Unrealistic, RealWorld };

struct Projection2D {
  /// "u:<id>" or "r:<id>".
  std::vector<std::string> ids;
  std::vector<ProjectionSet> sets;
  std::vector<std::array<double, 2>> coords;
  /// Eigenvalues of the pooled covariance along the two components.
  std::array<double, 2> explained_variance{};
  /// The same, as fractions of total variance.
  std::array<double, 2> explained_variance_ratio{};
  /// False when the centered data had rank < 2 (second axis zeroed).
  bool full_rank = true;
};

/// Seeded subsample of each set to min(per_set_cap, rows), pooled and
/// mean-centered, projected on the top two principal components found by
/// power iteration with deflation. Subsampling keys on ids, so the result
/// does not depend on input row order.
Projection2D pca_project(const EmbeddingMatrix& unrealistic, const EmbeddingMatrix& realworld,
                         std::size_t per_set_cap, std::uint64_t seed);

/// Top-2 PCA of a raw row-major matrix (n x d); coordinates per row.
struct PcaResult {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> eigenvalues{};
  double total_variance = 0;
  bool full_rank = true;
};
PcaResult pca_top2(const std::vector<double>& rows, std::size_t n, std::size_t d, std::uint64_t seed);

std::string format_histogram(const Histogram& h);
std::string format_percentile_table(const std::vector<PercentileRow>& rows);
std::string format_projection(const Projection2D& p);

}  // namespace realsub
