#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace realsub {

// 64-bit FNV-1a. Used for content digests and (with distinct bases) for
// the mock embedder's feature hashing, so the constants are part of the
// on-disk contract and must never change.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = kFnvOffset) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

/// Incremental FNV-1a over a byte stream.
class Digest {
 public:
  void update(std::string_view bytes) { state_ = fnv1a64(bytes, state_); }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = kFnvOffset;
};

/// 16 lowercase hex characters.
std::string to_hex(std::uint64_t v);

/// Digest of a file's raw bytes. Throws InputData if unreadable.
std::string file_digest(const std::filesystem::path& path);

}  // namespace realsub
