#include "realsub/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "realsub/csv.hpp"
#include "realsub/digest.hpp"
#include "realsub/error.hpp"
#include "realsub/rng.hpp"
#include "realsub/selector.hpp"

namespace realsub {

namespace {

double percentile_value(const std::vector<double>& sorted, double phi) {
  const std::size_t k = std::min(fraction_floor(phi, sorted.size()), sorted.size() - 1);
  return sorted[k];
}

}  // namespace

Histogram histogram(const std::vector<DistanceRecord>& records, std::size_t bins) {
  if (records.empty()) fail(ErrorKind::InputData, "histogram: no distance records");
  if (bins == 0) fail(ErrorKind::Config, "histogram: bins must be >= 1");

  std::vector<double> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(r.distance);
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;

  Histogram h;
  h.bin_edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) h.bin_edges[k] = lo + width * static_cast<double>(k);
  if (hi > lo) h.bin_edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double x : sorted) {
    auto it = std::upper_bound(h.bin_edges.begin(), h.bin_edges.end(), x);
    auto idx = static_cast<std::size_t>(std::distance(h.bin_edges.begin(), it));
    idx = std::clamp<std::size_t>(idx, 1, bins) - 1;
    ++h.counts[idx];
  }
  h.total = sorted.size();
  h.p10 = percentile_value(sorted, 0.10);
  h.p25 = percentile_value(sorted, 0.25);
  h.p50 = percentile_value(sorted, 0.50);
  h.p75 = percentile_value(sorted, 0.75);
  return h;
}

std::vector<PercentileRow> percentile_table(const std::vector<DistanceRecord>& records, std::vector<double> phis) {
  std::sort(phis.begin(), phis.end());
  std::vector<PercentileRow> rows;
  rows.reserve(phis.size());
  for (double phi : phis) {
    const auto spec = select_subset(records, phi);
    rows.push_back({phi, spec.manifest.threshold, spec.manifest.selected_count});
  }
  return rows;
}

namespace {

// y = C v with C = X^T X / (n - 1), X centered, without forming C.
void covariance_apply(const std::vector<double>& x, std::size_t n, std::size_t d, const std::vector<double>& v,
                      std::vector<double>& y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * d;
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += row[j] * v[j];
    for (std::size_t j = 0; j < d; ++j) y[j] += proj * row[j];
  }
  const double scale = n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0;
  for (auto& e : y) e *= scale;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double normalize(std::vector<double>& v) {
  const double norm = std::sqrt(dot(v, v));
  if (norm > 0.0)
    for (auto& e : v) e /= norm;
  return norm;
}

// Fixes the sign so the largest-magnitude entry is positive.
void canonical_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
  if (v[arg] < 0.0)
    for (auto& e : v) e = -e;
}

constexpr double kTolerance = 1e-6;
constexpr std::size_t kMaxIterations = 500;

// Leading eigenpair of C restricted to the complement of `deflate`.
std::pair<std::vector<double>, double> power_iteration(const std::vector<double>& x, std::size_t n, std::size_t d,
                                                       const std::vector<std::vector<double>>& deflate,
                                                       Rng& rng) {
  std::vector<double> v(d);
  for (auto& e : v) e = rng.normal();
  auto project_out = [&](std::vector<double>& w) {
    for (const auto& u : deflate) {
      const double c = dot(w, u);
      for (std::size_t j = 0; j < d; ++j) w[j] -= c * u[j];
    }
  };
  project_out(v);
  if (normalize(v) == 0.0) return {v, 0.0};

  std::vector<double> w(d);
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    covariance_apply(x, n, d, v, w);
    const double before = std::sqrt(dot(w, w));
    project_out(w);
    project_out(w);
    // A residual at rounding level means the deflated operator is zero.
    const double after = normalize(w);
    if (after == 0.0 || after <= 1e-10 * before) return {v, 0.0};
    double diff = 0.0;
    for (std::size_t j = 0; j < d; ++j) diff += (w[j] - v[j]) * (w[j] - v[j]);
    v.swap(w);
    if (std::sqrt(diff) < kTolerance) break;
  }
  covariance_apply(x, n, d, v, w);
  project_out(w);
  return {v, std::max(0.0, dot(v, w))};
}

}  // namespace

PcaResult pca_top2(const std::vector<double>& rows, std::size_t n, std::size_t d, std::uint64_t seed) {
  if (rows.size() != n * d) fail(ErrorKind::Invariant, "pca: shape mismatch");
  if (n == 0 || d == 0) fail(ErrorKind::InputData, "pca: empty input");
  std::vector<double> x = rows;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] -= mean[j];

  PcaResult out;
  for (std::size_t i = 0; i < n * d; ++i) out.total_variance += x[i] * x[i];
  out.total_variance /= n > 1 ? static_cast<double>(n - 1) : 1.0;

  Rng rng(seed);
  auto [v1, l1] = power_iteration(x, n, d, {}, rng);
  auto [v2, l2] = d >= 2 ? power_iteration(x, n, d, {v1}, rng) : std::pair{std::vector<double>(d, 0.0), 0.0};
  const double rank_floor = 1e-12 * std::max(out.total_variance, 1e-300);
  if (l1 <= rank_floor) {
    l1 = 0.0;
    std::fill(v1.begin(), v1.end(), 0.0);
  }
  if (l2 <= rank_floor) {
    out.full_rank = false;
    l2 = 0.0;
    std::fill(v2.begin(), v2.end(), 0.0);
  }
  canonical_sign(v1);
  canonical_sign(v2);
  out.eigenvalues = {l1, l2};

  out.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * d;
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      a += row[j] * v1[j];
      b += row[j] * v2[j];
    }
    out.coords[i] = {a, b};
  }
  return out;
}

Projection2D pca_project(const EmbeddingMatrix& unrealistic, const EmbeddingMatrix& realworld,
                         std::size_t per_set_cap, std::uint64_t seed) {
  if (unrealistic.dim() != realworld.dim())
    fail(ErrorKind::InputData,
         fmt::format("pca: dimension mismatch ({} vs {})", unrealistic.dim(), realworld.dim()));
  if (per_set_cap < 2) fail(ErrorKind::Config, "pca: per-set cap must be >= 2");

  const std::size_t d = unrealistic.dim();
  Projection2D proj;
  std::vector<double> pooled;

  auto take = [&](const EmbeddingMatrix& m, ProjectionSet set, std::string_view prefix) {
    // Rank rows by a seeded hash of their id; order-independent sampling.
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) keyed.emplace_back(derive_seed(seed, fnv1a64(m.ids()[r])), r);
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : m.ids()[a.second] < m.ids()[b.second];
    });
    keyed.resize(std::min(per_set_cap, keyed.size()));
    for (const auto& [key, r] : keyed) {
      proj.ids.push_back(fmt::format("{}{}", prefix, m.ids()[r]));
      proj.sets.push_back(set);
      for (float v : m.row(r)) pooled.push_back(v);
    }
  };
  take(unrealistic, ProjectionSet::Unrealistic, "u:");
  take(realworld, ProjectionSet::RealWorld, "r:");

  const std::size_t n = proj.ids.size();
  if (n == 0) fail(ErrorKind::InputData, "pca: no rows to project");
  auto pca = pca_top2(pooled, n, d, seed);
  if (!pca.full_rank) spdlog::warn("pca: centered data has rank < 2; second coordinate set to zero");
  proj.coords = std::move(pca.coords);
  proj.explained_variance = pca.eigenvalues;
  proj.full_rank = pca.full_rank;
  if (pca.total_variance > 0.0) {
    proj.explained_variance_ratio = {pca.eigenvalues[0] / pca.total_variance,
                                     pca.eigenvalues[1] / pca.total_variance};
  }
  return proj;
}

std::string format_histogram(const Histogram& h) {
  std::string out = fmt::format("# nearest real-world distance histogram: bins={} total={}\n", h.counts.size(),
                                h.total);
  out += fmt::format("# p10={:.6f}\n# p25={:.6f}\n# p50={:.6f}\n# p75={:.6f}\n", h.p10, h.p25, h.p50, h.p75);
  out += "bin_lo,bin_hi,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    out += fmt::format("{:.6f},{:.6f},{}\n", h.bin_edges[k], h.bin_edges[k + 1], h.counts[k]);
  return out;
}

std::string format_percentile_table(const std::vector<PercentileRow>& rows) {
  std::string out = "# distance threshold and selected count per percentile phi\n";
  out += "phi,threshold,count\n";
  for (const auto& r : rows) out += fmt::format("{},{:.6f},{}\n", r.phi, r.threshold, r.count);
  return out;
}

std::string format_projection(const Projection2D& p) {
  std::string out = fmt::format("# PCA projection: explained_variance={:.6g},{:.6g} ratio={:.6f},{:.6f}\n",
                                p.explained_variance[0], p.explained_variance[1], p.explained_variance_ratio[0],
                                p.explained_variance_ratio[1]);
  out += "id,set,x,y\n";
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    const std::string_view id = std::string_view(p.ids[i]).substr(2);
    out += fmt::format("{},{},{:.6f},{:.6f}\n", csv_escape(id),
                       p.sets[i] == ProjectionSet::Unrealistic ? "unrealistic" : "realworld", p.coords[i][0],
                       p.coords[i][1]);
  }
  return out;
}

}  // namespace realsub
