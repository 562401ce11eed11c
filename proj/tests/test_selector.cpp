#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "realsub/dataset.hpp"
#include "realsub/selector.hpp"
#include "support.hpp"

using namespace realsub;
using realsub::testing::expect_error;

namespace {

std::vector<DistanceRecord> records_of(const std::vector<double>& d) {
  std::vector<DistanceRecord> out;
  for (std::size_t i = 0; i < d.size(); ++i) out.push_back({"u" + std::to_string(i), "r", d[i]});
  return out;
}

Corpus corpus_of(std::size_t n) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({"u" + std::to_string(i), "text " + std::to_string(i), int(i % 2), ""});
  return Corpus(CorpusKind::Unrealistic, std::move(s));
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("selector") {
  TEST_CASE("hand example: ties at the threshold are included") {
    const auto spec = select_subset(records_of({0.1, 0.2, 0.2, 0.2, 0.9}), 0.25);
    CHECK(spec.manifest.threshold == 0.2);
    CHECK(spec.manifest.selected_count == 4);
    CHECK(spec.selected_ids == std::vector<std::string>{"u0", "u1", "u2", "u3"});
    CHECK(spec.manifest.seed_independent);
    CHECK_FALSE(spec.manifest.random);
  }

  TEST_CASE("phi edges") {
    const auto recs = records_of({0.5, 0.1, 0.3});
    const auto all = select_subset(recs, 1.0);
    CHECK(all.manifest.selected_count == 3);
    CHECK(all.manifest.threshold == 0.5);
    const auto none = select_subset(recs, 0.0);
    CHECK(none.selected_ids.empty());
    CHECK(none.manifest.threshold == 0.0);
    expect_error(ErrorKind::Config, [&] { select_subset(recs, 1.5); });
    expect_error(ErrorKind::Config, [&] { select_subset(recs, -0.1); });
    expect_error(ErrorKind::InputData, [] { select_subset({}, 0.5); });
  }

  TEST_CASE("duplicate query ids are rejected") {
    auto recs = records_of({0.1, 0.2});
    recs[1].query_id = recs[0].query_id;
    expect_error(ErrorKind::InputData, [&] { select_subset(recs, 0.5); }, {"duplicate"});
  }

  TEST_CASE("fraction_floor guards representation error") {
    CHECK(fraction_floor(0.1, 154150) == 15415);
    CHECK(fraction_floor(0.7, 10) == 7);  // 0.7 * 10 = 6.999... in binary
    CHECK(fraction_floor(0.3, 10) == 3);
    CHECK(fraction_floor(1.0, 5) == 5);
    CHECK(fraction_floor(0.0, 5) == 0);
  }

  TEST_CASE("ordering among equal distances is by id") {
    const std::vector<DistanceRecord> recs = {{"b", "r", 1.0}, {"a", "r", 1.0}, {"c", "r", 0.5}};
    CHECK(select_subset(recs, 1.0).selected_ids == std::vector<std::string>{"c", "a", "b"});
  }

  TEST_CASE("subset spec round-trips") {
    auto spec = select_subset(records_of({0.3, 0.1, 0.2}), 0.5);
    spec.manifest.unrealistic_digest = "00000000000000aa";
    CHECK(parse_subset_spec(format_subset_spec(spec)) == spec);
    auto rnd = random_subset(corpus_of(10), 0.3, 4);
    CHECK(parse_subset_spec(format_subset_spec(rnd)) == rnd);
    expect_error(ErrorKind::InputData, [] { parse_subset_spec("phi: 0.1\n"); }, {"---"});
  }

  TEST_CASE("emit_subset: 100 ids, seed 7 gives 98/2") {
    const auto corpus = corpus_of(200);
    std::vector<double> d(200);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i);
    const auto spec = select_subset(records_of(d), 0.495);  // floor(99) -> 100 ids
    REQUIRE(spec.selected_ids.size() == 100);
    const auto dir = realsub::testing::scratch_dir("emit-98-2");
    const auto res = emit_subset(corpus, spec, dir / "sub.jsonl", {true, 7, 0.02});
    CHECK(res.train_size == 98);
    CHECK(res.validation_size == 2);
    const auto train = load_corpus(*res.train_path, CorpusKind::Unrealistic);
    const auto val = load_corpus(*res.validation_path, CorpusKind::Unrealistic);
    CHECK(train.size() == 98);
    CHECK(val.size() == 2);
    auto ids = train.ids();
    for (const auto& id : val.ids()) ids.push_back(id);
    CHECK(as_set(ids) == as_set(spec.selected_ids));
    CHECK(load_subset_spec(res.spec_path) == spec);
    // Labels carried through unchanged.
    for (const auto& s : train.samples()) CHECK(s.label == corpus[*corpus.find(s.id)].label);

    const auto dir2 = realsub::testing::scratch_dir("emit-98-2-again");
    emit_subset(corpus, spec, dir2 / "sub.jsonl", {true, 7, 0.02});
    for (auto name : {"sub.jsonl", "sub.subset", "sub.train.jsonl", "sub.val.jsonl"})
      CHECK(read_file(dir / name) == read_file(dir2 / name));
  }

  TEST_CASE("emit_subset: one id gives train 1, validation 0") {
    const auto corpus = corpus_of(5);
    const auto spec = select_subset(records_of({0.1, 0.2, 0.3, 0.4, 0.5}), 0.1);
    REQUIRE(spec.selected_ids.size() == 1);
    const auto res = emit_subset(corpus, spec, realsub::testing::scratch_dir("emit-1") / "s.jsonl", {true, 7, 0.02});
    CHECK(res.train_size == 1);
    CHECK(res.validation_size == 0);
    const auto [train, val] = train_validation_split(1, 1.0, 3);
    CHECK(train.size() == 1);
    CHECK(val.empty());
  }

  TEST_CASE("emit_subset rejects ids outside the corpus") {
    SubsetSpec spec;
    spec.selected_ids = {"nope"};
    spec.manifest.selected_count = 1;
    expect_error(ErrorKind::InputData,
                 [&] { emit_subset(corpus_of(3), spec, realsub::testing::scratch_dir("emit-bad") / "s.jsonl"); },
                 {"'nope'"});
  }

  TEST_CASE("random_subset examples") {
    const auto c = corpus_of(10);
    CHECK(random_subset(c, 1.0, 1).selected_ids == c.ids());
    CHECK(random_subset(c, 0.0, 1).selected_ids.empty());
    const auto a = random_subset(c, 0.3, 1);
    const auto b = random_subset(c, 0.3, 2);
    CHECK(a.selected_ids.size() == 3);
    CHECK(b.selected_ids.size() == 3);
    CHECK(a == random_subset(c, 0.3, 1));
    CHECK(a.manifest.random);
    CHECK_FALSE(a.manifest.seed_independent);
    CHECK(a.manifest.seed == 1u);
    CHECK(a.manifest.threshold == -1.0);
    // Different seeds differ for at least one of a handful of seed pairs.
    bool any_diff = as_set(a.selected_ids) != as_set(b.selected_ids);
    for (std::uint64_t s = 3; s < 8; ++s) any_diff = any_diff || random_subset(c, 0.3, s) != a;
    CHECK(any_diff);
  }

  TEST_CASE("random_subset is uniform over positions") {
    const auto c = corpus_of(10);
    std::vector<int> hits(10, 0);
    for (std::uint64_t s = 0; s < 4000; ++s)
      for (const auto& id : random_subset(c, 0.3, s).selected_ids) ++hits[std::stoul(id.substr(1))];
    for (int h : hits) CHECK(std::abs(h - 1200) < 150);  // expected 1200, sd ~29
  }

  TEST_CASE("property suite over random multisets with forced ties") {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 1 + gen() % 200;
      const int levels = 1 + static_cast<int>(gen() % 20);
      std::vector<double> d(n);
      for (auto& x : d) x = static_cast<double>(gen() % levels) / 7.0;
      const auto recs = records_of(d);
      auto shuffled = recs;
      std::shuffle(shuffled.begin(), shuffled.end(), gen);

      std::vector<double> phis = {0.0, 1.0};
      for (int k = 0; k < 12; ++k) phis.push_back(static_cast<double>(gen() % 1001) / 1000.0);
      std::sort(phis.begin(), phis.end());

      std::set<std::string> prev;
      double prev_threshold = -1;
      for (double phi : phis) {
        const auto spec = select_subset(recs, phi);
        const auto ids = as_set(spec.selected_ids);
        CHECK(spec == select_subset(shuffled, phi));
        CHECK(std::includes(ids.begin(), ids.end(), prev.begin(), prev.end()));
        CHECK(spec.manifest.selected_count >= fraction_floor(phi, n));
        for (const auto& r : recs) CHECK((ids.contains(r.query_id) == (phi > 0 && r.distance <= spec.manifest.threshold)));
        if (phi > 0) {
          CHECK(spec.manifest.threshold >= prev_threshold);
          prev_threshold = spec.manifest.threshold;
          // Tie-free count under the index rule is k + 1; any excess comes
          // from records past index k sharing the threshold.
          std::vector<double> sorted = d;
          std::sort(sorted.begin(), sorted.end());
          const std::size_t k = std::min(fraction_floor(phi, n), n - 1);
          const bool tie_past_index = k + 1 < n && sorted[k + 1] == sorted[k];
          CHECK((spec.manifest.selected_count > k + 1) == tie_past_index);
        }
        prev = ids;
      }
      CHECK(select_subset(recs, 0.0).selected_ids.empty());
      CHECK(select_subset(recs, 1.0).manifest.selected_count == n);
    }
  }

  TEST_CASE("distinct distances select exactly the index prefix") {
    // With distinct distances the rule selects indices 0..floor(phi N),
    // i.e. floor(phi N) + 1 records (clamped to N).
    std::vector<double> d(1000);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>((i * 7919) % 1000);
    for (double phi : {0.001, 0.1, 0.25, 0.5, 0.999, 1.0}) {
      const auto spec = select_subset(records_of(d), phi);
      CHECK(spec.manifest.selected_count == std::min<std::size_t>(fraction_floor(phi, 1000) + 1, 1000));
    }
  }
}
