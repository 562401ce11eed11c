#include "realsub/embed_client.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "realsub/digest.hpp"
#include "realsub/error.hpp"

namespace realsub {

using nlohmann::json;

HttpTransport::HttpTransport(std::string endpoint, std::string model, std::string bearer_token, std::size_t timeout_s)
    : model_(std::move(model)), token_(std::move(bearer_token)), timeout_s_(timeout_s) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, kUrl)) fail(ErrorKind::Config, fmt::format("bad endpoint URL '{}'", endpoint));
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
}

std::string make_embedding_request(const std::string& model, const std::vector<std::string>& inputs) {
  json body;
  body["model"] = model;
  body["input"] = inputs;
  return body.dump();
}

std::vector<std::vector<float>> parse_embedding_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TransportError(fmt::format("response is not JSON: {}", e.what()));
  }
  const json* items = &j;
  if (j.is_object() && j.contains("data")) items = &j["data"];
  if (!items->is_array()) throw TransportError("response is not an array of embeddings");

  std::vector<std::vector<float>> out(items->size());
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& item = (*items)[i];
    if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array())
      throw TransportError(fmt::format("response item {} has no embedding array", i));
    // Providers that return an explicit index may reorder items.
    std::size_t slot = i;
    if (item.contains("index") && item["index"].is_number_unsigned()) slot = item["index"].get<std::size_t>();
    if (slot >= out.size() || !out[slot].empty()) throw TransportError(fmt::format("bad item index {}", slot));
    const auto& emb = item["embedding"];
    out[slot].reserve(emb.size());
    for (const auto& x : emb) {
      if (!x.is_number()) throw TransportError(fmt::format("response item {} has a non-numeric entry", i));
      out[slot].push_back(x.get<float>());
    }
  }
  return out;
}

std::vector<std::vector<float>> HttpTransport::post(const std::vector<std::string>& inputs) {
  httplib::Client client(base_);
  if (!client.is_valid()) throw TransportError(fmt::format("cannot create HTTP client for {}", base_));
  client.set_connection_timeout(static_cast<time_t>(timeout_s_));
  client.set_read_timeout(static_cast<time_t>(timeout_s_));
  client.set_bearer_token_auth(token_);
  auto res = client.Post(path_, make_embedding_request(model_, inputs), "application/json");
  if (!res) throw TransportError(fmt::format("transport failure: {}", httplib::to_string(res.error())));
  if (res->status < 200 || res->status >= 300)
    throw TransportError(fmt::format("HTTP status {}: {}", res->status, res->body.substr(0, 200)));
  return parse_embedding_response(res->body);
}

namespace {

std::string cache_file_name(const std::string& model) {
  std::string safe;
  for (char c : model) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return safe + ".embcache";
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, std::string model_name)
    : file_(dir / cache_file_name(model_name)) {
  if (!std::filesystem::exists(file_)) return;
  const std::string bytes = read_file(file_);
  std::size_t pos = 0;
  while (pos + 12 <= bytes.size()) {
    std::uint64_t key = 0;
    std::uint32_t dim = 0;
    std::memcpy(&key, bytes.data() + pos, 8);
    std::memcpy(&dim, bytes.data() + pos + 8, 4);
    pos += 12;
    if (pos + std::size_t{dim} * 4 > bytes.size()) break;  // torn tail from an interrupted run
    std::vector<float> v(dim);
    std::memcpy(v.data(), bytes.data() + pos, std::size_t{dim} * 4);
    pos += std::size_t{dim} * 4;
    entries_[key] = std::move(v);
  }
}

std::optional<std::vector<float>> EmbeddingCache::get(std::string_view text) const {
  auto it = entries_.find(fnv1a64(text));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::string_view text, std::vector<float> vec) {
  const auto key = fnv1a64(text);
  if (entries_.emplace(key, std::move(vec)).second) pending_.push_back(key);
}

void EmbeddingCache::flush() {
  if (pending_.empty()) return;
  std::string out;
  for (auto key : pending_) {
    const auto& v = entries_.at(key);
    const auto dim = static_cast<std::uint32_t>(v.size());
    out.append(reinterpret_cast<const char*>(&key), 8);
    out.append(reinterpret_cast<const char*>(&dim), 4);
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  std::filesystem::create_directories(file_.parent_path());
  std::ofstream f(file_, std::ios::binary | std::ios::app);
  if (!f) fail(ErrorKind::InputData, "cannot append to cache " + file_.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  pending_.clear();
}

EmbeddingMatrix embed_external(const Corpus& corpus, const EmbedderConfig& config, EmbeddingTransport& transport,
                               EmbeddingCache* cache) {
  config.validate();
  const std::size_t n = corpus.size();
  const std::size_t dim = config.dim;
  if (n == 0) fail(ErrorKind::InputData, "cannot embed an empty corpus");

  // Texts actually sent, after truncation.
  std::vector<std::string> texts(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string_view t = corpus[i].text;
    if (auto cut = truncate_to_tokens(t, config.max_tokens)) {
      spdlog::info("truncated sample '{}' to {} tokens", corpus[i].id, config.max_tokens);
      t = *cut;
    }
    texts[i] = std::string(t);
  }

  std::vector<std::vector<float>> rows(n);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (cache != nullptr) {
      if (auto hit = cache->get(texts[i]); hit && hit->size() == dim) {
        rows[i] = std::move(*hit);
        continue;
      }
    }
    pending.push_back(i);
  }

  const std::size_t batches = (pending.size() + config.batch_size - 1) / config.batch_size;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mu;

  auto worker = [&] {
    while (!stop) {
      const std::size_t b = next++;
      if (b >= batches) return;
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(pending.size(), lo + config.batch_size);
      std::vector<std::string> inputs;
      for (std::size_t k = lo; k < hi; ++k) inputs.push_back(texts[pending[k]]);

      std::string last_error;
      bool ok = false;
      for (std::size_t attempt = 0; attempt <= config.retries && !stop; ++attempt) {
        if (attempt > 0) {
          std::this_thread::sleep_for(std::chrono::milliseconds(config.backoff_ms << (attempt - 1)));
        }
        try {
          auto out = transport.post(inputs);
          if (out.size() != inputs.size())
            throw TransportError(fmt::format("expected {} embeddings, got {}", inputs.size(), out.size()));
          for (std::size_t k = 0; k < out.size(); ++k) {
            if (out[k].size() != dim)
              throw TransportError(fmt::format("sample '{}': response dimension {} != configured {}",
                                               corpus[pending[lo + k]].id, out[k].size(), dim));
          }
          for (std::size_t k = 0; k < out.size(); ++k) rows[pending[lo + k]] = std::move(out[k]);
          ok = true;
          break;
        } catch (const TransportError& e) {
          last_error = e.what();
          spdlog::warn("embedding batch {} attempt {} failed: {}", b, attempt + 1, last_error);
        }
      }
      if (!ok) {
        std::lock_guard lock(error_mu);
        if (!error) {
          error = std::make_exception_ptr(Error(
              ErrorKind::ExternalService,
              fmt::format("embedding failed for sample '{}' after {} attempts: {}", corpus[pending[lo]].id,
                          config.retries + 1, last_error)));
        }
        stop = true;
        return;
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    const std::size_t workers = std::min(config.concurrency, std::max<std::size_t>(batches, 1));
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  if (cache != nullptr) {
    for (std::size_t i : pending) cache->put(texts[i], rows[i]);
    cache->flush();
  }

  std::vector<float> data;
  data.reserve(n * dim);
  for (auto& r : rows) {
    if (config.normalize) l2_normalize(r);
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(dim, corpus.ids(), std::move(data), config.normalize);
}

}  // namespace realsub
