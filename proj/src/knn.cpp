#include "realsub/knn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "realsub/csv.hpp"
#include "realsub/error.hpp"
#include "realsub/parallel.hpp"
#include "realsub/rng.hpp"

namespace realsub {

namespace {

inline double sq_dist(const float* a, const float* b, std::size_t d) {
  // Eight independent lanes let the compiler vectorize the reduction
  // without reassociating a single accumulator.
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) {
      const double diff = static_cast<double>(a[i + k]) - static_cast<double>(b[i + k]);
      acc[k] += diff * diff;
    }
  }
  double tail = 0.0;
  for (; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    tail += diff * diff;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline bool better(double d, std::size_t row, const Hit& best) {
  return d < best.distance || (d == best.distance && row < best.row);
}

constexpr Hit kNoHit{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorKind::Invariant, fmt::format("dimension mismatch: {} vs {}", a, b));
}

}  // namespace

double squared_l2(std::span<const float> p, std::span<const float> q) {
  check_dims(p.size(), q.size());
  return sq_dist(p.data(), q.data(), p.size());
}

double euclidean(std::span<const float> p, std::span<const float> q) { return std::sqrt(squared_l2(p, q)); }

std::string_view to_string(IndexMode m) { return m == IndexMode::Exact ? "exact" : "ivf"; }

IndexMode parse_index_mode(std::string_view s) {
  if (s == "exact") return IndexMode::Exact;
  if (s == "ivf") return IndexMode::Ivf;
  fail(ErrorKind::Config, fmt::format("unknown index mode '{}' (expected exact or ivf)", s));
}

void NeighborIndex::rebuild_lists(std::size_t centroid_count) {
  lists_.assign(centroid_count, {});
  for (std::size_t r = 0; r < assignments_.size(); ++r) lists_[assignments_[r]].push_back(static_cast<std::uint32_t>(r));
}

namespace {

// Nearest centroid per row, ties to the lower centroid id.
void assign_rows(const EmbeddingMatrix& x, const std::vector<float>& centroids, std::size_t c,
                 std::vector<std::uint32_t>& assignment) {
  const std::size_t d = x.dim();
  parallel_for(x.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const float* row = x.data().data() + r * d;
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const double dist = sq_dist(row, centroids.data() + k * d, d);
        if (dist < best) {
          best = dist;
          arg = static_cast<std::uint32_t>(k);
        }
      }
      assignment[r] = arg;
    }
  });
}

std::vector<float> kmeanspp_seed(const EmbeddingMatrix& x, std::size_t c, std::uint64_t seed) {
  const std::size_t n = x.rows();
  const std::size_t d = x.dim();
  Rng rng(seed);
  std::vector<float> centroids;
  centroids.reserve(c * d);
  std::vector<char> chosen(n, 0);
  auto take = [&](std::size_t r) {
    chosen[r] = 1;
    auto row = x.row(r);
    centroids.insert(centroids.end(), row.begin(), row.end());
  };
  take(static_cast<std::size_t>(rng.below(n)));

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t k = 1; k < c; ++k) {
    const float* last = centroids.data() + (k - 1) * d;
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) d2[r] = std::min(d2[r], sq_dist(x.data().data() + r * d, last, d));
    });
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double run = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        run += d2[r];
        if (run > target && d2[r] > 0.0) {
          pick = r;
          break;
        }
      }
      if (pick == n) {
        // Rounding at the tail; take the last row with positive weight.
        for (std::size_t r = n; r-- > 0;) {
          if (d2[r] > 0.0) {
            pick = r;
            break;
          }
        }
      }
    } else {
      // All remaining rows coincide with a centroid: pick any unchosen row.
      std::size_t remaining = 0;
      for (char ch : chosen) remaining += ch ? 0 : 1;
      std::size_t skip = static_cast<std::size_t>(rng.below(remaining));
      for (std::size_t r = 0; r < n; ++r) {
        if (chosen[r]) continue;
        if (skip-- == 0) {
          pick = r;
          break;
        }
      }
    }
    take(pick);
  }
  return centroids;
}

}  // namespace

NeighborIndex build_index(EmbeddingMatrix reference, const IndexParams& params) {
  if (reference.empty()) fail(ErrorKind::InputData, "cannot build an index over an empty reference set");
  NeighborIndex index;
  index.mode_ = params.mode;
  const std::size_t n = reference.rows();
  const std::size_t d = reference.dim();

  if (params.mode == IndexMode::Ivf) {
    std::size_t c = params.centroids;
    if (c == 0) c = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    if (c > n) fail(ErrorKind::Config, fmt::format("centroid count {} exceeds reference rows {}", c, n));
    if (params.nprobe == 0) fail(ErrorKind::Config, "nprobe must be positive");

    std::vector<float> centroids = kmeanspp_seed(reference, c, params.seed);
    std::vector<std::uint32_t> assignment(n, 0);
    for (std::size_t iter = 0; iter < params.max_iterations; ++iter) {
      assign_rows(reference, centroids, c, assignment);
      std::vector<double> sums(c * d, 0.0);
      std::vector<std::size_t> counts(c, 0);
      for (std::size_t r = 0; r < n; ++r) {
        const auto k = assignment[r];
        ++counts[k];
        const float* row = reference.data().data() + r * d;
        double* s = sums.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) s[j] += row[j];
      }
      double max_shift = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        if (counts[k] == 0) continue;  // empty cell keeps its centroid
        double shift = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const auto updated = static_cast<float>(sums[k * d + j] / static_cast<double>(counts[k]));
          const double delta = static_cast<double>(updated) - centroids[k * d + j];
          shift += delta * delta;
          centroids[k * d + j] = updated;
        }
        max_shift = std::max(max_shift, std::sqrt(shift));
      }
      if (max_shift < params.tolerance) break;
    }
    assign_rows(reference, centroids, c, assignment);

    index.centroids_ = std::move(centroids);
    index.assignments_ = std::move(assignment);
    index.nprobe_ = std::min(params.nprobe, c);
    index.rebuild_lists(c);
  }
  index.reference_ = std::move(reference);
  return index;
}

void NeighborIndex::search_exact(const EmbeddingMatrix& queries, std::vector<Hit>& out) const {
  const std::size_t d = dim();
  const std::size_t nq = queries.rows();
  const std::size_t nr = reference_.rows();
  // Tile so a reference block stays cache resident across a query block.
  const std::size_t ref_block = std::max<std::size_t>(16, (256 * 1024) / (d * sizeof(float)));
  constexpr std::size_t kQueryBlock = 32;
  const std::size_t query_blocks = (nq + kQueryBlock - 1) / kQueryBlock;

  parallel_for(query_blocks, [&](std::size_t begin, std::size_t end) {
    for (std::size_t qb = begin; qb < end; ++qb) {
      const std::size_t q0 = qb * kQueryBlock;
      const std::size_t q1 = std::min(nq, q0 + kQueryBlock);
      for (std::size_t q = q0; q < q1; ++q) out[q] = kNoHit;
      for (std::size_t r0 = 0; r0 < nr; r0 += ref_block) {
        const std::size_t r1 = std::min(nr, r0 + ref_block);
        for (std::size_t q = q0; q < q1; ++q) {
          const float* qv = queries.data().data() + q * d;
          Hit best = out[q];
          for (std::size_t r = r0; r < r1; ++r) {
            const double dist = sq_dist(qv, reference_.data().data() + r * d, d);
            if (dist < best.distance) best = {r, dist};  // rows ascend, so strict < keeps the lower row
          }
          out[q] = best;
        }
      }
    }
  });
}

void NeighborIndex::search_ivf(const EmbeddingMatrix& queries, std::size_t nprobe, std::vector<Hit>& out) const {
  const std::size_t d = dim();
  const std::size_t c = centroid_count();
  nprobe = std::clamp<std::size_t>(nprobe, 1, c);
  parallel_for(queries.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::uint32_t>> cells(c);
    for (std::size_t q = begin; q < end; ++q) {
      const float* qv = queries.data().data() + q * d;
      for (std::size_t k = 0; k < c; ++k)
        cells[k] = {sq_dist(qv, centroids_.data() + k * d, d), static_cast<std::uint32_t>(k)};
      std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(nprobe), cells.end());
      Hit best = kNoHit;
      for (std::size_t p = 0; p < nprobe; ++p) {
        for (std::uint32_t r : lists_[cells[p].second]) {
          const double dist = sq_dist(qv, reference_.data().data() + std::size_t{r} * d, d);
          if (better(dist, r, best)) best = {r, dist};
        }
      }
      out[q] = best;
    }
  });
}

std::vector<Hit> NeighborIndex::search(const EmbeddingMatrix& queries, std::optional<std::size_t> nprobe) const {
  check_dims(queries.dim(), dim());
  std::vector<Hit> out(queries.rows());
  if (mode_ == IndexMode::Exact) {
    search_exact(queries, out);
  } else {
    search_ivf(queries, nprobe.value_or(nprobe_), out);
  }
  for (auto& h : out) {
    if (h.row == kNoHit.row) fail(ErrorKind::Invariant, "search produced no neighbor");
    h.distance = std::sqrt(h.distance);
  }
  return out;
}

std::vector<DistanceRecord> nearest(const NeighborIndex& index, const EmbeddingMatrix& queries,
                                    std::optional<std::size_t> nprobe) {
  if (queries.dim() != index.dim())
    fail(ErrorKind::InputData,
         fmt::format("dimension mismatch: queries have dim {}, reference has dim {}", queries.dim(), index.dim()));
  const auto hits = index.search(queries, nprobe);
  std::vector<DistanceRecord> out;
  out.reserve(hits.size());
  for (std::size_t q = 0; q < hits.size(); ++q)
    out.push_back({queries.ids()[q], index.reference().ids()[hits[q].row], hits[q].distance});
  return out;
}

// A hit is an approximate neighbor at the exact nearest distance, so tied neighbors count.
double recall_at_1(const std::vector<DistanceRecord>& approx, const std::vector<DistanceRecord>& exact) {
  if (approx.size() != exact.size())
    fail(ErrorKind::Invariant, fmt::format("recall: {} approximate vs {} exact records", approx.size(), exact.size()));
  if (exact.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    if (approx[i].query_id != exact[i].query_id)
      fail(ErrorKind::Invariant, fmt::format("recall: query id mismatch at {}: '{}' vs '{}'", i, approx[i].query_id,
                                             exact[i].query_id));
    if (std::abs(approx[i].distance - exact[i].distance) <= 1e-5 * std::abs(exact[i].distance)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(exact.size());
}

namespace {

constexpr char kIndexMagic[4] = {'I', 'D', 'X', '1'};

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos, std::string_view origin) {
  if (pos + sizeof(T) > bytes.size()) fail(ErrorKind::InputData, fmt::format("{}: truncated index file", origin));
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

// Layout: "IDX1", u8 mode, u32 centroids, u32 nprobe, u32 dim, u64 assigned
// rows (0 for exact), centroids*dim f32, assigned-rows u32, then an EMB1 blob.
std::string encode_index(const NeighborIndex& index) {
  std::string out(kIndexMagic, 4);
  put<std::uint8_t>(out, index.mode_ == IndexMode::Exact ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.centroid_count()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.nprobe_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  put<std::uint64_t>(out, index.assignments_.size());
  out.append(reinterpret_cast<const char*>(index.centroids_.data()), index.centroids_.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(index.assignments_.data()),
             index.assignments_.size() * sizeof(std::uint32_t));
  out += encode_embeddings(index.reference_);
  return out;
}

NeighborIndex decode_index(std::string_view bytes, std::string_view origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kIndexMagic, 4) != 0)
    fail(ErrorKind::InputData, fmt::format("{}: bad magic", origin));
  std::size_t pos = 4;
  NeighborIndex index;
  const auto mode = take<std::uint8_t>(bytes, pos, origin);
  if (mode > 1) fail(ErrorKind::InputData, fmt::format("{}: unknown index mode {}", origin, mode));
  index.mode_ = mode == 0 ? IndexMode::Exact : IndexMode::Ivf;
  const auto c = take<std::uint32_t>(bytes, pos, origin);
  index.nprobe_ = take<std::uint32_t>(bytes, pos, origin);
  const auto d = take<std::uint32_t>(bytes, pos, origin);
  const auto assigned = take<std::uint64_t>(bytes, pos, origin);
  const std::size_t centroid_bytes = std::size_t{c} * d * sizeof(float);
  if (assigned > bytes.size() || pos + centroid_bytes + assigned * sizeof(std::uint32_t) > bytes.size())
    fail(ErrorKind::InputData, fmt::format("{}: truncated IVF tables", origin));
  index.centroids_.resize(std::size_t{c} * d);
  std::memcpy(index.centroids_.data(), bytes.data() + pos, centroid_bytes);
  pos += centroid_bytes;
  const std::size_t assign_bytes = assigned * sizeof(std::uint32_t);
  index.assignments_.resize(assign_bytes / sizeof(std::uint32_t));
  std::memcpy(index.assignments_.data(), bytes.data() + pos, assign_bytes);
  pos += assign_bytes;
  index.reference_ = decode_embeddings(bytes.substr(pos), origin);

  if (index.reference_.dim() != d) fail(ErrorKind::InputData, fmt::format("{}: dim mismatch in index", origin));
  if (index.mode_ == IndexMode::Ivf) {
    if (index.assignments_.size() != index.reference_.rows() || c == 0 || index.nprobe_ == 0 || index.nprobe_ > c)
      fail(ErrorKind::InputData, fmt::format("{}: inconsistent IVF tables", origin));
    for (auto a : index.assignments_)
      if (a >= c) fail(ErrorKind::InputData, fmt::format("{}: assignment out of range", origin));
    index.rebuild_lists(c);
  }
  return index;
}

void save_index(const NeighborIndex& index, const std::filesystem::path& path) {
  write_file(path, encode_index(index));
}

NeighborIndex load_index(const std::filesystem::path& path) { return decode_index(read_file(path), path.string()); }

std::string format_distances(const std::vector<DistanceRecord>& records) {
  std::string out = "query_id,neighbor_id,distance\n";
  for (const auto& r : records)
    out += fmt::format("{},{},{:.6f}\n", csv_escape(r.query_id), csv_escape(r.neighbor_id), r.distance);
  return out;
}

void save_distances(const std::vector<DistanceRecord>& records, const std::filesystem::path& path) {
  write_file(path, format_distances(records));
}

std::vector<DistanceRecord> parse_distances(std::string_view content, std::string_view origin) {
  std::vector<DistanceRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != "query_id,neighbor_id,distance")
        fail(ErrorKind::InputData, fmt::format("{}: missing header query_id,neighbor_id,distance", origin));
      continue;
    }
    auto fields = csv_split(line);
    if (fields.size() != 3) fail(ErrorKind::InputData, fmt::format("{}:{}: expected 3 fields", origin, line_no));
    double dist = 0.0;
    const auto& f = fields[2];
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), dist);
    if (ec != std::errc{} || ptr != f.data() + f.size() || !(dist >= 0.0) || !std::isfinite(dist))
      fail(ErrorKind::InputData, fmt::format("{}:{}: bad distance '{}'", origin, line_no, f));
    out.push_back({std::move(fields[0]), std::move(fields[1]), dist});
  }
  return out;
}

std::vector<DistanceRecord> load_distances(const std::filesystem::path& path) {
  return parse_distances(read_file(path), path.string());
}

}  // namespace realsub
