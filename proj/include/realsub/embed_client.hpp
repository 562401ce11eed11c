#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "realsub/dataset.hpp"
#include "realsub/embedding.hpp"

namespace realsub {

/// Raised by a transport for a failed request; retried by embed_external.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sends one batch of texts, returns one vector per text in order.
class EmbeddingTransport {
 public:
  virtual ~EmbeddingTransport() = default;
  virtual std::vector<std::vector<float>> post(const std::vector<std::string>& inputs) = 0;
};

/// POSTs {"model": ..., "input": [...]} and accepts either a bare array of
/// {"embedding": [...]} objects or an object whose "data" member is one.
class HttpTransport : public EmbeddingTransport {
 public:
  HttpTransport(std::string endpoint, std::string model, std::string bearer_token, std::size_t timeout_s);
  std::vector<std::vector<float>> post(const std::vector<std::string>& inputs) override;

 private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::string token_;
  std::size_t timeout_s_;
};

/// Parses an embedding response body; throws TransportError on bad shape.
std::vector<std::vector<float>> parse_embedding_response(const std::string& body);
std::string make_embedding_request(const std::string& model, const std::vector<std::string>& inputs);

/// On-disk response cache keyed by (model name, text digest). Entries are
/// appended in corpus order so the file contents are deterministic.
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path dir, std::string model_name);

  std::optional<std::vector<float>> get(std::string_view text) const;
  void put(std::string_view text, std::vector<float> vec);
  /// Appends entries added since construction.
  void flush();
  std::size_t size() const { return entries_.size(); }

 private:
  std::filesystem::path file_;
  std::unordered_map<std::uint64_t, std::vector<float>> entries_;
  std::vector<std::uint64_t> pending_;
};

/// Batched, concurrent, retried embedding through `transport`. Rows come
/// back in corpus order regardless of batch completion order.
EmbeddingMatrix embed_external(const Corpus& corpus, const EmbedderConfig& config, EmbeddingTransport& transport,
                               EmbeddingCache* cache = nullptr);

}  // namespace realsub
