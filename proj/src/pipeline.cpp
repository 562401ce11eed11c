#include "realsub/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "realsub/dataset.hpp"
#include "realsub/digest.hpp"
#include "realsub/error.hpp"
#include "realsub/reporting.hpp"
#include "realsub/rng.hpp"
#include "realsub/selector.hpp"

namespace realsub {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Dedup: return "dedup";
    case Stage::Embed: return "embed";
    case Stage::Index: return "index";
    case Stage::Distances: return "distances";
    case Stage::Select: return "select";
    case Stage::Report: return "report";
    case Stage::Eval: return "eval";
    case Stage::Synth: return "synth";
    case Stage::All: return "all";
  }
  return "unknown";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : {Stage::Ingest, Stage::Dedup, Stage::Embed, Stage::Index, Stage::Distances, Stage::Select,
                   Stage::Report, Stage::Eval, Stage::Synth, Stage::All})
    if (to_string(st) == s) return st;
  fail(ErrorKind::Config, fmt::format("unknown subcommand '{}'", s));
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> kStages = {Stage::Ingest,    Stage::Dedup,  Stage::Embed,  Stage::Index,
                                             Stage::Distances, Stage::Select, Stage::Report, Stage::Eval};
  return kStages;
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> kKeys = {
      "paths.unrealistic",     "paths.realworld",     "paths.output",        "run.seed",
      "dedup.enabled",         "dedup.threshold",     "embed.backend",       "embed.dim",
      "embed.max_tokens",      "embed.normalize",     "embed.endpoint",      "embed.model",
      "embed.token_env",       "embed.batch_size",    "embed.retries",       "embed.backoff_ms",
      "embed.concurrency",     "embed.timeout_s",     "embed.cache_dir",     "embed.precomputed_unrealistic",
      "embed.precomputed_realworld", "index.mode",    "index.centroids",     "index.nprobe",
      "index.seed",            "index.max_iterations", "index.include_test_split", "split.train",
      "split.val",             "select.phis",         "select.split",        "select.validation_share",
      "report.bins",           "report.pca_cap",      "eval.phis",           "eval.seeds",
      "eval.learning_rate",    "eval.epochs",         "eval.l2_penalty",     "synth.n_real",
      "synth.n_unreal",        "synth.realistic_fraction", "synth.dim",      "synth.noise_label_rate",
      "synth.output"};
  return kKeys;
}

std::size_t non_negative(const ConfigDoc& doc, const std::string& key, std::size_t fallback) {
  auto v = doc.get_int(key);
  if (!v) return fallback;
  if (*v < 0) fail(ErrorKind::Config, fmt::format("config key '{}' must be non-negative", key));
  return static_cast<std::size_t>(*v);
}

void check_fraction(double v, std::string_view what) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::Config, fmt::format("{} = {} outside [0,1]", what, v));
}

}  // namespace

PipelineConfig PipelineConfig::from_doc(const ConfigDoc& doc) {
  for (const auto& k : doc.keys())
    if (!known_keys().contains(k)) fail(ErrorKind::Config, fmt::format("unknown config key '{}'", k));

  PipelineConfig c;
  if (auto v = doc.get_string("paths.unrealistic")) c.unrealistic_path = *v;
  if (auto v = doc.get_string("paths.realworld")) c.realworld_path = *v;
  if (auto v = doc.get_string("paths.output")) c.output_dir = *v;
  if (auto v = doc.get_int("run.seed")) c.seed = static_cast<std::uint64_t>(*v);

  if (auto v = doc.get_bool("dedup.enabled")) c.dedup_enabled = *v;
  if (auto v = doc.get_double("dedup.threshold")) c.dedup_threshold = *v;

  if (auto v = doc.get_string("embed.backend")) c.embed.backend = parse_embed_backend(*v);
  c.embed.dim = non_negative(doc, "embed.dim", c.embed.dim);
  c.embed.max_tokens = non_negative(doc, "embed.max_tokens", c.embed.max_tokens);
  if (auto v = doc.get_bool("embed.normalize")) c.embed.normalize = *v;
  if (auto v = doc.get_string("embed.endpoint")) c.embed.endpoint = *v;
  if (auto v = doc.get_string("embed.model")) c.embed.model_name = *v;
  if (auto v = doc.get_string("embed.token_env")) c.embed.token_env = *v;
  c.embed.batch_size = non_negative(doc, "embed.batch_size", c.embed.batch_size);
  c.embed.retries = non_negative(doc, "embed.retries", c.embed.retries);
  c.embed.backoff_ms = non_negative(doc, "embed.backoff_ms", c.embed.backoff_ms);
  c.embed.concurrency = non_negative(doc, "embed.concurrency", c.embed.concurrency);
  c.embed.timeout_s = non_negative(doc, "embed.timeout_s", c.embed.timeout_s);
  if (auto v = doc.get_string("embed.cache_dir")) c.embed.cache_dir = *v;
  if (auto v = doc.get_string("embed.precomputed_unrealistic")) c.precomputed_unrealistic = *v;
  if (auto v = doc.get_string("embed.precomputed_realworld")) c.precomputed_realworld = *v;

  if (auto v = doc.get_string("index.mode")) c.index.mode = parse_index_mode(*v);
  c.index.centroids = non_negative(doc, "index.centroids", c.index.centroids);
  c.index.nprobe = non_negative(doc, "index.nprobe", c.index.nprobe);
  c.index.max_iterations = non_negative(doc, "index.max_iterations", c.index.max_iterations);
  if (auto v = doc.get_int("index.seed")) {
    c.index.seed = static_cast<std::uint64_t>(*v);
  } else {
    c.index.seed = derive_seed(c.seed, 1);
  }
  if (auto v = doc.get_bool("index.include_test_split")) c.include_test_split = *v;
  if (auto v = doc.get_double("split.train")) c.split_train = *v;
  if (auto v = doc.get_double("split.val")) c.split_val = *v;

  if (auto v = doc.get_double_list("select.phis")) c.phis = *v;
  if (auto v = doc.get_bool("select.split")) c.emit_split = *v;
  if (auto v = doc.get_double("select.validation_share")) c.validation_share = *v;

  c.histogram_bins = non_negative(doc, "report.bins", c.histogram_bins);
  c.pca_cap = non_negative(doc, "report.pca_cap", c.pca_cap);

  if (auto v = doc.get_double_list("eval.phis")) c.eval_phis = *v;
  if (auto v = doc.get_int_list("eval.seeds")) {
    c.eval_seeds.clear();
    for (auto s : *v) c.eval_seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (auto v = doc.get_double("eval.learning_rate")) c.probe.learning_rate = *v;
  c.probe.epochs = non_negative(doc, "eval.epochs", c.probe.epochs);
  if (auto v = doc.get_double("eval.l2_penalty")) c.probe.l2_penalty = *v;

  c.synth.n_real = non_negative(doc, "synth.n_real", c.synth.n_real);
  c.synth.n_unreal = non_negative(doc, "synth.n_unreal", c.synth.n_unreal);
  if (auto v = doc.get_double("synth.realistic_fraction")) c.synth.realistic_fraction = *v;
  c.synth.dim = non_negative(doc, "synth.dim", c.synth.dim);
  if (auto v = doc.get_double("synth.noise_label_rate")) c.synth.noise_label_rate = *v;
  c.synth.seed = c.seed;
  if (auto v = doc.get_string("synth.output")) c.synth_output = *v;

  // Output location does not change artifact content.
  ConfigDoc shaped = doc;
  shaped.set("paths.output", "\"\"");
  shaped.set("run.seed", std::to_string(c.seed));
  c.digest = to_hex(fnv1a64(shaped.canonical()));
  return c;
}

void PipelineConfig::validate(Stage stage) const {
  for (double phi : phis) check_fraction(phi, "select.phis entry");
  for (double phi : eval_phis) check_fraction(phi, "eval.phis entry");
  check_fraction(dedup_threshold, "dedup.threshold");
  check_fraction(validation_share, "select.validation_share");
  check_fraction(split_train, "split.train");
  check_fraction(split_val, "split.val");
  if (split_train + split_val > 1.0 + 1e-12) fail(ErrorKind::Config, "split.train + split.val exceeds 1");
  if (histogram_bins < 1) fail(ErrorKind::Config, "report.bins must be >= 1");
  if (pca_cap < 2) fail(ErrorKind::Config, "report.pca_cap must be >= 2");
  if (index.nprobe < 1) fail(ErrorKind::Config, "index.nprobe must be >= 1");
  if (output_dir.empty()) fail(ErrorKind::Config, "paths.output is empty");
  embed.validate();
  probe.validate();
  if (stage == Stage::Synth) synth.validate();

  if (stage == Stage::Ingest || stage == Stage::All) {
    if (unrealistic_path.empty() || realworld_path.empty())
      fail(ErrorKind::Config, "paths.unrealistic and paths.realworld are required");
    for (const auto& p : {unrealistic_path, realworld_path})
      if (!fs::exists(p)) fail(ErrorKind::Config, fmt::format("input file not found: {}", p.string()));
  }
  if (stage == Stage::Embed || stage == Stage::All) {
    for (const auto& p : {precomputed_unrealistic, precomputed_realworld})
      if (!p.empty() && !fs::exists(p)) fail(ErrorKind::Config, fmt::format("embedding file not found: {}", p.string()));
    if (precomputed_unrealistic.empty() != precomputed_realworld.empty())
      fail(ErrorKind::Config, "set both embed.precomputed_unrealistic and embed.precomputed_realworld, or neither");
  }
}

namespace {

/// Exclusive ownership of an output directory for one run.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      fail(ErrorKind::Config, fmt::format("output directory {} is locked by another run (remove {} if stale)",
                                          dir.string(), path_.string()));
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

/// Writes a stage into a staging directory, records provenance and run log,
/// then swaps it into place.
class StageRun {
 public:
  StageRun(const PipelineConfig& config, Stage stage, fs::path final_dir)
      : config_(config), stage_(stage), final_(std::move(final_dir)), start_(std::chrono::steady_clock::now()),
        started_at_(utc_timestamp()) {
    staging_ = final_.parent_path() / fmt::format(".staging-{}", final_.filename().string());
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StageRun() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  fs::path out(const std::string& name) const { return staging_ / name; }

  /// Records an input file by digest. `label` is how it appears in
  /// provenance (relative for artifacts inside the output tree).
  void input(const fs::path& path) {
    if (!fs::exists(path))
      fail(ErrorKind::InputData, fmt::format("missing input {} (run the producing stage first)", path.string()));
    inputs_[label(path)] = file_digest(path);
  }

  void commit() {
    json prov;
    prov["stage"] = to_string(stage_);
    prov["config_digest"] = config_.digest;
    prov["seed"] = config_.seed;
    prov["inputs"] = inputs_;
    std::map<std::string, std::string> outputs;
    for (const auto& e : fs::recursive_directory_iterator(staging_)) {
      if (e.is_regular_file()) outputs[fs::relative(e.path(), staging_).generic_string()] = file_digest(e.path());
    }
    prov["outputs"] = outputs;
    write_file(staging_ / "PROVENANCE.json", prov.dump(2) + "\n");

    fs::remove_all(final_);
    fs::rename(staging_, final_);
    committed_ = true;

    json log = prov;
    log["started_at"] = started_at_;
    log["finished_at"] = utc_timestamp();
    log["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log["output_dir"] = final_.string();
    write_file(config_.output_dir / "logs" / fmt::format("{}.json", to_string(stage_)), log.dump(2) + "\n");
    spdlog::info("{}: done ({} outputs)", to_string(stage_), outputs.size());
  }

 private:
  std::string label(const fs::path& p) const {
    std::error_code ec;
    const auto rel = fs::relative(fs::weakly_canonical(p), fs::weakly_canonical(config_.output_dir), ec);
    if (!ec && !rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }

  const PipelineConfig& config_;
  Stage stage_;
  fs::path final_;
  fs::path staging_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
  std::map<std::string, std::string> inputs_;
  bool committed_ = false;
};

struct Layout {
  fs::path root;
  fs::path dir(std::string_view stage) const { return root / stage; }
  fs::path corpus(std::string_view stage, CorpusKind k) const {
    return root / stage / fmt::format("{}.jsonl", to_string(k));
  }
  fs::path embeddings(CorpusKind k) const { return root / "embed" / fmt::format("{}.emb", to_string(k)); }
  fs::path index() const { return root / "index" / "index.bin"; }
  fs::path split() const { return root / "index" / "split.txt"; }
  fs::path distances() const { return root / "distances" / "distances.csv"; }
};

constexpr CorpusKind kKinds[] = {CorpusKind::Unrealistic, CorpusKind::RealWorld};

void stage_ingest(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Ingest, l.dir("ingest"));
  for (auto kind : kKinds) {
    const auto& src = kind == CorpusKind::Unrealistic ? c.unrealistic_path : c.realworld_path;
    run.input(src);
    const Corpus corpus = load_corpus(src, kind);
    if (corpus.empty()) fail(ErrorKind::InputData, fmt::format("{} corpus {} is empty", to_string(kind), src.string()));
    spdlog::info("ingest: {} {} samples (created_at {})", corpus.size(), to_string(kind),
                 corpus.manifest().created_at);
    save_corpus(corpus, run.out(fmt::format("{}.jsonl", to_string(kind))));
    save_manifest(corpus.manifest(), run.out(fmt::format("{}.manifest.json", to_string(kind))));
  }
  run.commit();
}

void stage_dedup(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Dedup, l.dir("dedup"));
  for (auto kind : kKinds) {
    const auto src = l.corpus("ingest", kind);
    run.input(src);
    const Corpus corpus = load_corpus(src, kind);
    Corpus kept = corpus;
    std::vector<std::string> removed;
    if (c.dedup_enabled) {
      auto result = dedup(corpus, c.dedup_threshold);
      kept = std::move(result.kept);
      removed = std::move(result.removed_ids);
    }
    spdlog::info("dedup: {} removed {} of {}", to_string(kind), removed.size(), corpus.size());
    save_corpus(kept, run.out(fmt::format("{}.jsonl", to_string(kind))));
    save_manifest(kept.manifest(), run.out(fmt::format("{}.manifest.json", to_string(kind))));
    save_id_list(removed, run.out(fmt::format("{}.removed.txt", to_string(kind))));
  }
  run.commit();
}

void stage_embed(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Embed, l.dir("embed"));
  for (auto kind : kKinds) {
    const auto src = l.corpus("dedup", kind);
    run.input(src);
    const Corpus corpus = load_corpus(src, kind);
    const auto& pre = kind == CorpusKind::Unrealistic ? c.precomputed_unrealistic : c.precomputed_realworld;
    EmbeddingMatrix m;
    if (!pre.empty()) {
      run.input(pre);
      const auto all = load_embeddings(pre);
      std::unordered_map<std::string_view, std::size_t> pos;
      for (std::size_t i = 0; i < all.rows(); ++i) pos.emplace(all.ids()[i], i);
      std::vector<std::size_t> rows;
      for (const auto& s : corpus.samples()) {
        auto it = pos.find(s.id);
        if (it == pos.end())
          fail(ErrorKind::InputData, fmt::format("{} has no embedding for sample '{}'", pre.string(), s.id));
        rows.push_back(it->second);
      }
      m = all.select_rows(rows);
    } else {
      EmbedderConfig ec = c.embed;
      if (ec.cache_dir.empty()) ec.cache_dir = c.output_dir / "cache";
      m = embed_corpus(corpus, ec);
    }
    m.validate();
    save_embeddings(m, run.out(fmt::format("{}.emb", to_string(kind))));
  }
  run.commit();
}

void stage_index(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Index, l.dir("index"));
  const auto corpus_path = l.corpus("dedup", CorpusKind::RealWorld);
  const auto emb_path = l.embeddings(CorpusKind::RealWorld);
  run.input(corpus_path);
  run.input(emb_path);
  const Corpus real = load_corpus(corpus_path, CorpusKind::RealWorld);
  const EmbeddingMatrix emb = load_embeddings(emb_path);

  const SplitSpec split = split_corpus(real, c.split_train, c.split_val, derive_seed(c.seed, 2));
  write_file(run.out("split.txt"), format_split(split));

  std::vector<std::string> ref_ids = split.train_ids;
  if (c.include_test_split) ref_ids = real.ids();
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < emb.rows(); ++i) pos.emplace(emb.ids()[i], i);
  std::vector<std::size_t> rows;
  for (const auto& id : ref_ids) {
    auto it = pos.find(id);
    if (it == pos.end()) fail(ErrorKind::InputData, fmt::format("{} has no row for '{}'", emb_path.string(), id));
    rows.push_back(it->second);
  }
  std::sort(rows.begin(), rows.end());
  auto index = build_index(emb.select_rows(rows), c.index);
  spdlog::info("index: {} mode over {} reference rows ({} centroids)", to_string(index.mode()), rows.size(),
               index.centroid_count());
  save_index(index, run.out("index.bin"));
  run.commit();
}

void stage_distances(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Distances, l.dir("distances"));
  const auto q_path = l.embeddings(CorpusKind::Unrealistic);
  run.input(q_path);
  run.input(l.index());
  const auto queries = load_embeddings(q_path);
  const auto index = load_index(l.index());
  if (queries.dim() != index.dim())
    fail(ErrorKind::InputData,
         fmt::format("dimension mismatch: {} has dim {} but {} (built from {}) has dim {}", q_path.string(),
                     queries.dim(), l.index().string(), l.embeddings(CorpusKind::RealWorld).string(), index.dim()));
  const auto records = nearest(index, queries);
  save_distances(records, run.out("distances.csv"));
  run.commit();
}

std::string phi_name(double phi) { return fmt::format("phi_{}", phi); }

void stage_select(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Select, l.dir("select"));
  const auto u_path = l.corpus("dedup", CorpusKind::Unrealistic);
  const auto r_path = l.corpus("dedup", CorpusKind::RealWorld);
  run.input(u_path);
  run.input(r_path);
  run.input(l.distances());
  const Corpus u = load_corpus(u_path, CorpusKind::Unrealistic);
  const Corpus r = load_corpus(r_path, CorpusKind::RealWorld);
  const auto records = load_distances(l.distances());
  const auto dist_digest = file_digest(l.distances());

  for (double phi : c.phis) {
    auto spec = select_subset(records, phi);
    spec.manifest.unrealistic_digest = u.manifest().content_digest;
    spec.manifest.realworld_digest = r.manifest().content_digest;
    spec.manifest.distance_file_digest = dist_digest;
    EmitOptions opts;
    opts.split = c.emit_split;
    opts.seed = derive_seed(c.seed, 3);
    opts.validation_share = c.validation_share;
    const auto res = emit_subset(u, spec, run.out(phi_name(phi) + ".jsonl"), opts);
    spdlog::info("select: phi={} threshold={:.6f} selected {} of {}", phi, spec.manifest.threshold,
                 spec.manifest.selected_count, spec.manifest.total_count);
    (void)res;
  }

  // Raw sorted distances, so the threshold convention can be audited.
  std::vector<const DistanceRecord*> sorted;
  for (const auto& rec : records) sorted.push_back(&rec);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return a->distance != b->distance ? a->distance < b->distance : a->query_id < b->query_id;
  });
  std::string out = "rank,query_id,distance\n";
  for (std::size_t i = 0; i < sorted.size(); ++i)
    out += fmt::format("{},{},{:.6f}\n", i, sorted[i]->query_id, sorted[i]->distance);
  write_file(run.out("sorted_distances.csv"), out);
  run.commit();
}

void stage_report(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Report, l.dir("report"));
  run.input(l.distances());
  run.input(l.embeddings(CorpusKind::Unrealistic));
  run.input(l.embeddings(CorpusKind::RealWorld));
  const auto records = load_distances(l.distances());
  write_file(run.out("histogram.csv"), format_histogram(histogram(records, c.histogram_bins)));
  write_file(run.out("percentiles.csv"), format_percentile_table(percentile_table(records, c.phis)));
  const auto u = load_embeddings(l.embeddings(CorpusKind::Unrealistic));
  const auto r = load_embeddings(l.embeddings(CorpusKind::RealWorld));
  write_file(run.out("projection.csv"), format_projection(pca_project(u, r, c.pca_cap, derive_seed(c.seed, 4))));
  run.commit();
}

void stage_eval(const PipelineConfig& c, const Layout& l) {
  StageRun run(c, Stage::Eval, l.dir("eval"));
  const auto u_path = l.corpus("dedup", CorpusKind::Unrealistic);
  const auto r_path = l.corpus("dedup", CorpusKind::RealWorld);
  for (const auto& p : {u_path, r_path, l.embeddings(CorpusKind::Unrealistic), l.embeddings(CorpusKind::RealWorld),
                        l.split(), l.distances()})
    run.input(p);
  const Corpus u = load_corpus(u_path, CorpusKind::Unrealistic);
  const Corpus r = load_corpus(r_path, CorpusKind::RealWorld);
  const auto u_emb = load_embeddings(l.embeddings(CorpusKind::Unrealistic));
  const auto r_emb = load_embeddings(l.embeddings(CorpusKind::RealWorld));
  const auto split = parse_split(read_file(l.split()), l.split().string());
  const auto records = load_distances(l.distances());

  GridConfig grid;
  grid.phis = c.eval_phis.empty() ? c.phis : c.eval_phis;
  grid.seeds = c.eval_seeds;
  grid.probe = c.probe;
  grid.require_train_neighbors = !c.include_test_split;
  const auto results = run_regime_grid({u, u_emb, r, r_emb, split, records}, grid);
  write_file(run.out("results.csv"), format_eval_results(results));
  write_file(run.out("summary.csv"), format_eval_summary(results));
  run.commit();
}

void stage_synth(const PipelineConfig& c) {
  const fs::path dir = c.synth_output.empty() ? c.output_dir / "synth" : c.synth_output;
  StageRun run(c, Stage::Synth, dir);
  const auto bench = synth_benchmark(c.synth);
  save_corpus(bench.unrealistic, run.out("unrealistic.jsonl"));
  save_corpus(bench.realworld, run.out("realworld.jsonl"));
  save_embeddings(bench.unrealistic_emb, run.out("unrealistic.emb"));
  save_embeddings(bench.realworld_emb, run.out("realworld.emb"));
  save_id_list(bench.realistic_ids, run.out("ground_truth.txt"));
  run.commit();
}

void run_one(Stage stage, const PipelineConfig& c, const Layout& l) {
  spdlog::info("{}: start", to_string(stage));
  switch (stage) {
    case Stage::Ingest: return stage_ingest(c, l);
    case Stage::Dedup: return stage_dedup(c, l);
    case Stage::Embed: return stage_embed(c, l);
    case Stage::Index: return stage_index(c, l);
    case Stage::Distances: return stage_distances(c, l);
    case Stage::Select: return stage_select(c, l);
    case Stage::Report: return stage_report(c, l);
    case Stage::Eval: return stage_eval(c, l);
    case Stage::Synth: return stage_synth(c);
    case Stage::All: break;
  }
  fail(ErrorKind::Invariant, "run_one called with Stage::All");
}

}  // namespace

void run_pipeline(Stage stage, const PipelineConfig& config) {
  config.validate(stage);
  DirLock lock(config.output_dir);
  const Layout layout{config.output_dir};
  if (stage == Stage::All) {
    for (Stage s : pipeline_stages()) run_one(s, config, layout);
  } else {
    run_one(stage, config, layout);
  }
}

}  // namespace realsub
