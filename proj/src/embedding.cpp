#include "realsub/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "realsub/digest.hpp"
#include "realsub/embed_client.hpp"
#include "realsub/error.hpp"
#include "realsub/parallel.hpp"

namespace realsub {

static_assert(std::endian::native == std::endian::little, "embedding I/O assumes a little-endian host");

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<std::string> ids, std::vector<float> data,
                                 bool normalized)
    : dim_(dim), ids_(std::move(ids)), data_(std::move(data)), normalized_(normalized) {
  if (dim_ == 0) fail(ErrorKind::Invariant, "embedding dim must be positive");
  if (data_.size() != ids_.size() * dim_)
    fail(ErrorKind::Invariant,
         fmt::format("embedding data has {} floats, expected {} rows x {} dim", data_.size(), ids_.size(), dim_));
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(rows.size());
  data.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    ids.push_back(ids_.at(r));
    auto v = row(r);
    data.insert(data.end(), v.begin(), v.end());
  }
  return EmbeddingMatrix(dim_, std::move(ids), std::move(data), normalized_);
}

void EmbeddingMatrix::validate() const {
  if (data_.size() != ids_.size() * dim_) fail(ErrorKind::InputData, "embedding shape mismatch");
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < rows(); ++i) {
    if (!seen.insert(ids_[i]).second) fail(ErrorKind::InputData, fmt::format("duplicate embedding id '{}'", ids_[i]));
    double sq = 0.0;
    for (float x : row(i)) {
      if (!std::isfinite(x)) fail(ErrorKind::InputData, fmt::format("non-finite value in row '{}'", ids_[i]));
      sq += static_cast<double>(x) * x;
    }
    if (normalized_ && sq > 0.0 && std::abs(std::sqrt(sq) - 1.0) > 1e-4)
      fail(ErrorKind::InputData, fmt::format("row '{}' has norm {} but matrix is flagged normalized", ids_[i],
                                             std::sqrt(sq)));
  }
}

std::string_view to_string(EmbedBackend b) { return b == EmbedBackend::MockHash ? "mock-hash" : "external-api"; }

EmbedBackend parse_embed_backend(std::string_view s) {
  if (s == "mock-hash") return EmbedBackend::MockHash;
  if (s == "external-api") return EmbedBackend::ExternalApi;
  fail(ErrorKind::Config, fmt::format("unknown embedding backend '{}' (expected mock-hash or external-api)", s));
}

void EmbedderConfig::validate() const {
  if (dim < 2) fail(ErrorKind::Config, fmt::format("embedding dim must be >= 2, got {}", dim));
  if (max_tokens < 1) fail(ErrorKind::Config, "max_tokens must be >= 1");
  if (backend == EmbedBackend::ExternalApi) {
    if (endpoint.empty()) fail(ErrorKind::Config, "external embedding backend needs an endpoint");
    if (model_name.empty()) fail(ErrorKind::Config, "external embedding backend needs a model name");
    if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
    if (concurrency < 1) fail(ErrorKind::Config, "concurrency must be >= 1");
  }
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mock_bucket_hash(std::string_view token) { return mix64(fnv1a64(token, kMockBucketSeed)); }
std::uint64_t mock_sign_hash(std::string_view token) { return mix64(fnv1a64(token, kMockSignSeed)); }

void l2_normalize(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq == 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

std::vector<float> mock_embed(std::string_view text, std::size_t dim, bool normalize) {
  if (dim < 2) fail(ErrorKind::Config, "mock_embed needs dim >= 2");
  std::vector<float> out(dim, 0.0f);
  for (auto tok : tokenize_views(text)) {
    const auto bucket = mock_bucket_hash(tok) % dim;
    out[bucket] += (mock_sign_hash(tok) % 2 == 0) ? 1.0f : -1.0f;
  }
  if (normalize) l2_normalize(out);
  return out;
}

std::optional<std::string_view> truncate_to_tokens(std::string_view text, std::size_t max_tokens) {
  auto toks = tokenize_views(text);
  if (toks.size() <= max_tokens) return std::nullopt;
  if (max_tokens == 0) return text.substr(0, 0);
  const auto& last = toks[max_tokens - 1];
  const auto end = static_cast<std::size_t>(last.data() - text.data()) + last.size();
  return text.substr(0, end);
}

EmbeddingMatrix embed_corpus(const Corpus& corpus, const EmbedderConfig& config) {
  config.validate();
  if (corpus.empty()) fail(ErrorKind::InputData, "cannot embed an empty corpus");

  if (config.backend == EmbedBackend::ExternalApi) {
    const char* token = std::getenv(config.token_env.c_str());
    if (token == nullptr || *token == '\0')
      fail(ErrorKind::Config, fmt::format("environment variable {} (API token) is not set", config.token_env));
    HttpTransport transport(config.endpoint, config.model_name, token, config.timeout_s);
    if (config.cache_dir.empty()) return embed_external(corpus, config, transport);
    EmbeddingCache cache(config.cache_dir, config.model_name);
    return embed_external(corpus, config, transport, &cache);
  }

  const std::size_t n = corpus.size();
  const std::size_t dim = config.dim;
  std::vector<float> data(n * dim);
  std::vector<char> truncated(n, 0);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::string_view text = corpus[i].text;
      if (auto cut = truncate_to_tokens(text, config.max_tokens)) {
        text = *cut;
        truncated[i] = 1;
      }
      auto v = mock_embed(text, dim, config.normalize);
      std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (truncated[i]) spdlog::info("truncated sample '{}' to {} tokens", corpus[i].id, config.max_tokens);
  }
  return EmbeddingMatrix(dim, corpus.ids(), std::move(data), config.normalize);
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::string encode_embeddings(const EmbeddingMatrix& m) {
  std::string out;
  std::size_t id_bytes = 0;
  for (const auto& id : m.ids()) id_bytes += 4 + id.size();
  out.reserve(kHeaderSize + m.data().size() * sizeof(float) + id_bytes);
  out.append(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  put<std::uint64_t>(out, m.rows());
  put<std::uint8_t>(out, m.normalized() ? 1 : 0);
  out.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(float));
  for (const auto& id : m.ids()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  return out;
}

EmbeddingMatrix decode_embeddings(std::string_view bytes, std::string_view origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorKind::InputData, fmt::format("{}: bad magic", origin));
  if (bytes.size() < kHeaderSize)
    fail(ErrorKind::InputData,
         fmt::format("{}: truncated header: expected {} bytes, got {}", origin, kHeaderSize, bytes.size()));
  const auto dim = get<std::uint32_t>(bytes, 4);
  const auto rows = get<std::uint64_t>(bytes, 8);
  const auto flag = get<std::uint8_t>(bytes, 16);
  if (dim == 0) fail(ErrorKind::InputData, fmt::format("{}: dim is zero", origin));
  if (flag > 1) fail(ErrorKind::InputData, fmt::format("{}: normalized flag must be 0 or 1", origin));

  // Each row needs its floats plus at least a 4-byte id length.
  const std::uint64_t data_bytes = rows * dim * sizeof(float);
  if (rows > bytes.size() || data_bytes / sizeof(float) / dim != rows ||
      kHeaderSize + data_bytes + rows * 4 > bytes.size()) {
    fail(ErrorKind::InputData, fmt::format("{}: truncated: header declares {} x {} needing at least {} bytes, got {}",
                                           origin, rows, dim, kHeaderSize + data_bytes + rows * 4, bytes.size()));
  }
  std::vector<float> data(rows * dim);
  std::memcpy(data.data(), bytes.data() + kHeaderSize, data_bytes);

  std::size_t pos = kHeaderSize + data_bytes;
  std::vector<std::string> ids;
  ids.reserve(rows);
  std::unordered_set<std::string> seen;
  for (std::uint64_t r = 0; r < rows; ++r) {
    if (pos + 4 > bytes.size())
      fail(ErrorKind::InputData,
           fmt::format("{}: truncated id table: expected at least {} bytes, got {}", origin, pos + 4, bytes.size()));
    const auto len = get<std::uint32_t>(bytes, pos);
    pos += 4;
    if (pos + len > bytes.size())
      fail(ErrorKind::InputData,
           fmt::format("{}: truncated id table: expected at least {} bytes, got {}", origin, pos + len, bytes.size()));
    std::string id(bytes.substr(pos, len));
    pos += len;
    if (!seen.insert(id).second) fail(ErrorKind::InputData, fmt::format("{}: duplicate id '{}'", origin, id));
    ids.push_back(std::move(id));
  }
  if (pos != bytes.size())
    fail(ErrorKind::InputData, fmt::format("{}: size mismatch: expected {} bytes, got {}", origin, pos, bytes.size()));
  return EmbeddingMatrix(dim, std::move(ids), std::move(data), flag == 1);
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  write_file(path, encode_embeddings(m));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file(path), path.string());
}

}  // namespace realsub
