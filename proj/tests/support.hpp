#pragma once

// Shared fixtures and independent oracles. The oracles deliberately avoid
// the library's kernels so that agreement is evidence, not tautology.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "realsub/embedding.hpp"
#include "realsub/error.hpp"
#include "realsub/knn.hpp"

namespace realsub::testing {

/// Fresh per-test directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "realsub-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline EmbeddingMatrix gaussian_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed,
                                       std::string_view prefix = "v") {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> data(rows * dim);
  for (auto& x : data) x = dist(gen);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows; ++i) ids.push_back(std::string(prefix) + std::to_string(i));
  return EmbeddingMatrix(dim, std::move(ids), std::move(data), false);
}

/// Coarse integer grid so ties occur often.
inline EmbeddingMatrix lattice_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed, int span,
                                      std::string_view prefix = "v") {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> dist(-span, span);
  std::vector<float> data(rows * dim);
  for (auto& x : data) x = static_cast<float>(dist(gen));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows; ++i) ids.push_back(std::string(prefix) + std::to_string(i));
  return EmbeddingMatrix(dim, std::move(ids), std::move(data), false);
}

struct OracleHit {
  std::size_t row;
  long double distance;
};

/// O(n*m) scan in long double; first minimum wins, so ties go to the lower row.
inline std::vector<OracleHit> brute_force(const EmbeddingMatrix& ref, const EmbeddingMatrix& queries) {
  std::vector<OracleHit> out;
  out.reserve(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    OracleHit best{0, std::numeric_limits<long double>::infinity()};
    const auto qv = queries.row(q);
    for (std::size_t r = 0; r < ref.rows(); ++r) {
      const auto rv = ref.row(r);
      long double s = 0;
      for (std::size_t j = 0; j < qv.size(); ++j) {
        const long double d = static_cast<long double>(qv[j]) - static_cast<long double>(rv[j]);
        s += d * d;
      }
      if (s < best.distance) best = {r, s};
    }
    best.distance = std::sqrt(best.distance);
    out.push_back(best);
  }
  return out;
}

inline bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1e-12, std::abs(a), std::abs(b)});
}

/// Runs `fn` and checks it throws realsub::Error of `kind` whose message
/// contains every needle.
template <typename Fn>
void expect_error(ErrorKind kind, Fn&& fn, std::initializer_list<std::string_view> needles = {}) {
  try {
    fn();
    FAIL("expected realsub::Error");
  } catch (const Error& e) {
    CHECK_MESSAGE(e.kind() == kind, e.what());
    for (auto n : needles) CHECK_MESSAGE(std::string(e.what()).find(n) != std::string::npos, e.what(), " lacks ", n);
  }
}

}  // namespace realsub::testing
