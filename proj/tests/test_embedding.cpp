#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "realsub/dataset.hpp"
#include "realsub/embed_client.hpp"
#include "realsub/embedding.hpp"
#include "support.hpp"

using namespace realsub;
using realsub::testing::expect_error;

namespace {

// Independent restatement of the mock hash: FNV-1a 64 with a chosen basis,
// then the splitmix64 finalizer.
std::uint64_t oracle_hash(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

Corpus texts(std::vector<std::string> t) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < t.size(); ++i) s.push_back({"s" + std::to_string(i), t[i], 0, ""});
  return Corpus(CorpusKind::Unrealistic, std::move(s));
}

EmbedderConfig mock_config(std::size_t dim, bool normalize = false) {
  EmbedderConfig c;
  c.dim = dim;
  c.normalize = normalize;
  return c;
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("mock hash matches the documented construction") {
    for (std::string_view tok : {"x", "y", "return", "caf\xc3\xa9", ""}) {
      CHECK(mock_bucket_hash(tok) == oracle_hash(tok, 0xcbf29ce484222325ULL));
      CHECK(mock_sign_hash(tok) == oracle_hash(tok, 0x6c62272e07bb0142ULL));
    }
  }

  TEST_CASE("mock_embed examples") {
    for (float v : mock_embed("", 16, false)) CHECK(v == 0.0f);
    for (float v : mock_embed("", 16, true)) CHECK(v == 0.0f);

    const auto xxx = mock_embed("x x x", 16, false);
    std::size_t nonzero = 0;
    for (float v : xxx) {
      if (v != 0.0f) {
        ++nonzero;
        CHECK(std::abs(v) == 3.0f);
      }
    }
    CHECK(nonzero == 1);

    const std::size_t dim = 16;
    const auto bx = oracle_hash("x", 0xcbf29ce484222325ULL) % dim;
    const auto by = oracle_hash("y", 0xcbf29ce484222325ULL) % dim;
    REQUIRE(bx != by);
    const auto xy = mock_embed("x y", dim, false);
    CHECK(std::count_if(xy.begin(), xy.end(), [](float v) { return v != 0.0f; }) == 2);
    CHECK(xy[bx] == ((oracle_hash("x", 0x6c62272e07bb0142ULL) % 2 == 0) ? 1.0f : -1.0f));
    CHECK(xy[by] == ((oracle_hash("y", 0x6c62272e07bb0142ULL) % 2 == 0) ? 1.0f : -1.0f));
  }

  TEST_CASE("embed_corpus with the mock backend") {
    const auto m = embed_corpus(texts({"a a", "a a", "a", "b", ""}), mock_config(8));
    CHECK(m.rows() == 5);
    CHECK(std::equal(m.row(0).begin(), m.row(0).end(), m.row(1).begin()));
    CHECK_FALSE(std::equal(m.row(2).begin(), m.row(2).end(), m.row(3).begin()));
    for (float v : m.row(4)) CHECK(v == 0.0f);
    CHECK(m.ids() == std::vector<std::string>{"s0", "s1", "s2", "s3", "s4"});
    CHECK(embed_corpus(texts({"a a", "a a", "a", "b", ""}), mock_config(8)) == m);
    expect_error(ErrorKind::InputData, [] { embed_corpus(Corpus{}, mock_config(8)); });
    expect_error(ErrorKind::Config, [] { embed_corpus(texts({"a"}), mock_config(1)); });
  }

  TEST_CASE("normalized rows have unit norm, zero rows stay zero") {
    const auto m = embed_corpus(texts({"int main ( ) { return 0 ; }", "x x y z", "", "q"}), mock_config(32, true));
    CHECK(m.normalized());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double sq = 0;
      for (float v : m.row(i)) sq += static_cast<double>(v) * v;
      if (i == 2) CHECK(sq == 0.0);
      else CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-4);
    }
  }

  TEST_CASE("permuting the corpus permutes the rows") {
    const auto a = embed_corpus(texts({"alpha beta", "gamma", "delta delta"}), mock_config(16));
    std::vector<Sample> rev = {{"s2", "delta delta", 0, ""}, {"s0", "alpha beta", 0, ""}, {"s1", "gamma", 0, ""}};
    const auto b = embed_corpus(Corpus(CorpusKind::Unrealistic, rev), mock_config(16));
    const std::size_t map[] = {2, 0, 1};
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(b.ids()[i] == a.ids()[map[i]]);
      CHECK(std::equal(b.row(i).begin(), b.row(i).end(), a.row(map[i]).begin()));
    }
  }

  TEST_CASE("truncation cuts at a token boundary") {
    CHECK_FALSE(truncate_to_tokens("a b c", 3).has_value());
    CHECK(*truncate_to_tokens("a, b; c d", 2) == "a, b");
    auto c = mock_config(8);
    c.max_tokens = 2;
    const auto m = embed_corpus(texts({"p q r s"}), c);
    const auto expect = mock_embed("p q", 8, false);
    CHECK(std::equal(m.row(0).begin(), m.row(0).end(), expect.begin()));
  }

  TEST_CASE("EMB1 round-trip preserves bit patterns") {
    std::vector<float> data = {1.5f, -0.0f, 3.25e-8f, 1e30f, 0.1f, 0.2f, 0.3f, 0.4f, -7.f, 8.f, 9.f, 10.f};
    const EmbeddingMatrix m(4, {"a", "bb", "caf\xc3\xa9"}, data, false);
    const auto dir = realsub::testing::scratch_dir("emb-roundtrip");
    save_embeddings(m, dir / "m.emb");
    const auto back = load_embeddings(dir / "m.emb");
    CHECK(back.ids() == m.ids());
    CHECK(back.dim() == 4);
    REQUIRE(back.data().size() == data.size());
    CHECK(std::memcmp(back.data().data(), data.data(), data.size() * sizeof(float)) == 0);
    CHECK(std::signbit(back.data()[1]));
  }

  TEST_CASE("EMB1 layout and load errors") {
    const EmbeddingMatrix m(2, {"a"}, {1.0f, 2.0f}, false);
    const auto bytes = encode_embeddings(m);
    CHECK(bytes.substr(0, 4) == "EMB1");
    CHECK(bytes.size() == 4 + 4 + 8 + 1 + 8 + 4 + 1);
    expect_error(ErrorKind::InputData, [&] { decode_embeddings("XXXX" + bytes.substr(4), "f.emb"); },
                 {"bad magic"});
    expect_error(ErrorKind::InputData, [&] { decode_embeddings(bytes.substr(0, 20), "f.emb"); },
                 {"truncated", "29", "20"});
    expect_error(ErrorKind::InputData, [&] { decode_embeddings(bytes + "z", "f.emb"); }, {"30", "31"});
  }

  TEST_CASE("matrix validation") {
    expect_error(ErrorKind::InputData,
                 [] { EmbeddingMatrix(2, {"a"}, {NAN, 0.0f}, false).validate(); }, {"non-finite"});
    expect_error(ErrorKind::InputData,
                 [] { EmbeddingMatrix(2, {"a"}, {3.0f, 0.0f}, true).validate(); }, {"normalized"});
  }
}

namespace {

/// Local embedding service. `fail_first` requests answer 503; `dim`
/// controls the vector length returned.
struct FakeService {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::atomic<int> fail_first{0};
  std::atomic<std::size_t> dim{4};
  std::string last_auth;
  std::string last_model;

  FakeService() {
    server.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests;
      last_auth = req.get_header_value("Authorization");
      if (n <= fail_first) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      last_model = body["model"].get<std::string>();
      nlohmann::json data = nlohmann::json::array();
      std::size_t idx = 0;
      for (const auto& text : body["input"]) {
        std::vector<float> v(dim.load(), 0.0f);
        v[0] = static_cast<float>(text.get<std::string>().size());
        data.push_back({{"index", idx++}, {"embedding", v}});
      }
      // Reverse to exercise index-based reassembly.
      std::reverse(data.begin(), data.end());
      res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeService() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings"; }
};

EmbedderConfig external_config(std::size_t dim) {
  EmbedderConfig c;
  c.backend = EmbedBackend::ExternalApi;
  c.dim = dim;
  c.batch_size = 2;
  c.retries = 2;
  c.backoff_ms = 1;
  c.concurrency = 2;
  c.timeout_s = 5;
  c.model_name = "test-model";
  return c;
}

}  // namespace

TEST_SUITE("embed-client") {
  TEST_CASE("response parsing") {
    auto v = parse_embedding_response(R"([{"embedding":[1,2]},{"embedding":[3,4]}])");
    CHECK(v == std::vector<std::vector<float>>{{1, 2}, {3, 4}});
    v = parse_embedding_response(R"({"data":[{"index":1,"embedding":[3]},{"index":0,"embedding":[1]}]})");
    CHECK(v == std::vector<std::vector<float>>{{1}, {3}});
    CHECK_THROWS_AS(parse_embedding_response("{"), TransportError);
    CHECK_THROWS_AS(parse_embedding_response(R"([{"vec":[1]}])"), TransportError);
    const auto req = nlohmann::json::parse(make_embedding_request("m", {"a", "b"}));
    CHECK(req["model"] == "m");
    CHECK(req["input"] == nlohmann::json::array({"a", "b"}));
  }

  TEST_CASE("HTTP transport batches, authenticates and restores order") {
    FakeService svc;
    HttpTransport transport(svc.url(), "test-model", "secret", 5);
    const auto corpus = texts({"a", "bb", "ccc", "dddd", "eeeee"});
    const auto m = embed_external(corpus, external_config(4), transport);
    CHECK(svc.requests == 3);
    CHECK(svc.last_auth == "Bearer secret");
    CHECK(svc.last_model == "test-model");
    for (std::size_t i = 0; i < 5; ++i) CHECK(m.row(i)[0] == static_cast<float>(i + 1));
  }

  TEST_CASE("transient failures are retried") {
    FakeService svc;
    svc.fail_first = 2;
    HttpTransport transport(svc.url(), "test-model", "t", 5);
    auto cfg = external_config(4);
    cfg.concurrency = 1;
    cfg.batch_size = 8;
    const auto m = embed_external(texts({"a", "bb"}), cfg, transport);
    CHECK(svc.requests == 3);
    CHECK(m.row(1)[0] == 2.0f);
  }

  TEST_CASE("persistent failure is fatal and names a sample") {
    FakeService svc;
    svc.fail_first = 1000;
    HttpTransport transport(svc.url(), "test-model", "t", 5);
    auto cfg = external_config(4);
    cfg.concurrency = 1;
    expect_error(ErrorKind::ExternalService, [&] { embed_external(texts({"a"}), cfg, transport); },
                 {"'s0'", "3 attempts", "503"});
    CHECK(svc.requests == 3);
  }

  TEST_CASE("dimension mismatch is retried then fatal") {
    FakeService svc;
    svc.dim = 3;
    HttpTransport transport(svc.url(), "test-model", "t", 5);
    auto cfg = external_config(4);
    cfg.concurrency = 1;
    expect_error(ErrorKind::ExternalService, [&] { embed_external(texts({"a"}), cfg, transport); },
                 {"'s0'", "dimension 3"});
  }

  TEST_CASE("unreachable endpoint is an external-service error") {
    HttpTransport transport("http://127.0.0.1:1/v1/embeddings", "m", "t", 1);
    auto cfg = external_config(4);
    cfg.retries = 0;
    expect_error(ErrorKind::ExternalService, [&] { embed_external(texts({"a"}), cfg, transport); });
  }

  TEST_CASE("cache serves repeats without network calls and survives reload") {
    FakeService svc;
    const auto dir = realsub::testing::scratch_dir("embed-cache");
    HttpTransport transport(svc.url(), "test-model", "t", 5);
    auto cfg = external_config(4);
    {
      EmbeddingCache cache(dir, "test-model");
      embed_external(texts({"a", "bb", "a"}), cfg, transport, &cache);
    }
    const int after_first = svc.requests;
    EmbeddingCache cache(dir, "test-model");
    CHECK(cache.size() == 2);
    const auto m = embed_external(texts({"bb", "a"}), cfg, transport, &cache);
    CHECK(svc.requests == after_first);
    CHECK(m.row(0)[0] == 2.0f);

    EmbeddingCache other(dir, "other-model");
    CHECK(other.size() == 0);
  }

  TEST_CASE("torn cache tail is ignored") {
    const auto dir = realsub::testing::scratch_dir("embed-cache-torn");
    {
      EmbeddingCache cache(dir, "m");
      cache.put("hello", {1, 2, 3});
      cache.flush();
    }
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      std::ofstream(e.path(), std::ios::app | std::ios::binary) << "junk";
    }
    EmbeddingCache cache(dir, "m");
    REQUIRE(cache.get("hello").has_value());
    CHECK(*cache.get("hello") == std::vector<float>{1, 2, 3});
  }

  TEST_CASE("external backend needs its token variable") {
    auto cfg = external_config(4);
    cfg.token_env = "REALSUB_TEST_UNSET_TOKEN";
    ::unsetenv("REALSUB_TEST_UNSET_TOKEN");
    expect_error(ErrorKind::Config, [&] { embed_corpus(texts({"a"}), cfg); }, {"REALSUB_TEST_UNSET_TOKEN"});
  }
}
