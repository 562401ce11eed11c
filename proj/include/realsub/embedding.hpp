#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "realsub/dataset.hpp"

namespace realsub {

/// Dense row-major float32 vectors, one row per sample id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t dim, std::vector<std::string> ids, std::vector<float> data, bool normalized);

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool normalized() const { return normalized_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// Rows in the given order.
  EmbeddingMatrix select_rows(std::span<const std::size_t> rows) const;

  /// Checks shape, finiteness, id uniqueness and (if flagged) unit norms.
  /// Throws InputData describing the first violation.
  void validate() const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  bool normalized_ = false;
};

enum class EmbedBackend { ExternalApi, MockHash };

std::string_view to_string(EmbedBackend b);
EmbedBackend parse_embed_backend(std::string_view s);

struct EmbedderConfig {
  EmbedBackend backend = EmbedBackend::MockHash;
  std::size_t dim = 1536;
  std::size_t max_tokens = 8191;
  bool normalize = false;

  // External backend only.
  std::string endpoint = "https://api.openai.com/v1/embeddings";
  std::string model_name = "text-embedding-ada-002";
  std::string token_env = "OPENAI_API_KEY";
  std::size_t batch_size = 64;
  std::size_t retries = 3;
  std::size_t backoff_ms = 500;
  std::size_t concurrency = 4;
  std::size_t timeout_s = 60;
  /// Response cache directory; empty disables caching.
  std::filesystem::path cache_dir;

  void validate() const;
};

/// Feature-hashing stand-in for a neural embedder. For each token t:
///   bucket = H(t) mod dim, sign = +1 if H'(t) is even else -1,
/// where H(t)  = mix64(fnv1a64(t, kMockBucketSeed)) and
///       H'(t) = mix64(fnv1a64(t, kMockSignSeed)),
/// mix64 being the splitmix64 finalizer.
inline constexpr std::uint64_t kMockBucketSeed = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kMockSignSeed = 0x6c62272e07bb0142ULL;

std::uint64_t mix64(std::uint64_t z);
std::uint64_t mock_bucket_hash(std::string_view token);
std::uint64_t mock_sign_hash(std::string_view token);

std::vector<float> mock_embed(std::string_view text, std::size_t dim, bool normalize);

/// Prefix of `text` holding at most `max_tokens` tokens (cut right after
/// the last kept token), or nullopt when no truncation is needed.
std::optional<std::string_view> truncate_to_tokens(std::string_view text, std::size_t max_tokens);

/// L2-normalizes in place; zero vectors are left untouched.
void l2_normalize(std::span<float> v);

/// One row per sample in corpus order. The external backend is handled by
/// embed_external (embed_client.hpp) with an HTTP transport.
EmbeddingMatrix embed_corpus(const Corpus& corpus, const EmbedderConfig& config);

/// Binary layout (little-endian): "EMB1", u32 dim, u64 rows, u8 normalized,
/// rows*dim f32, then rows u32-length-prefixed UTF-8 ids.
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
std::string encode_embeddings(const EmbeddingMatrix& m);
EmbeddingMatrix decode_embeddings(std::string_view bytes, std::string_view origin = "<memory>");

}  // namespace realsub
