#include "realsub/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "realsub/error.hpp"
#include "realsub/parallel.hpp"
#include "realsub/rng.hpp"
#include "realsub/selector.hpp"

namespace realsub {

void ProbeConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "probe learning_rate must be positive");
  if (epochs < 1) fail(ErrorKind::Config, "probe epochs must be >= 1");
  if (!(l2_penalty >= 0.0)) fail(ErrorKind::Config, "probe l2_penalty must be non-negative");
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double margin(const Probe& p, const float* row, std::size_t d) {
  double z = p.bias;
  for (std::size_t j = 0; j < d; ++j) z += p.weights[j] * row[j];
  return z;
}

double objective(const Probe& p, const EmbeddingMatrix& x, std::span<const int> y, double l2) {
  const std::size_t d = x.dim();
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = margin(p, x.data().data() + i * d, d);
    loss += softplus(z) - (y[i] == 1 ? z : 0.0);
  }
  loss /= static_cast<double>(x.rows());
  double sq = 0.0;
  for (double w : p.weights) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

void gradient(const Probe& p, const EmbeddingMatrix& x, std::span<const int> y, double l2, std::vector<double>& gw,
              double& gb) {
  const std::size_t d = x.dim();
  std::fill(gw.begin(), gw.end(), 0.0);
  gb = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const float* row = x.data().data() + i * d;
    const double r = sigmoid(margin(p, row, d)) - y[i];
    for (std::size_t j = 0; j < d; ++j) gw[j] += r * row[j];
    gb += r;
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (std::size_t j = 0; j < d; ++j) gw[j] = gw[j] * inv + l2 * p.weights[j];
  gb *= inv;
}

}  // namespace

double probe_loss(const Probe& probe, const EmbeddingMatrix& x, std::span<const int> labels, double l2_penalty) {
  return objective(probe, x, labels, l2_penalty);
}

Probe train_probe(const EmbeddingMatrix& x, std::span<const int> labels, const ProbeConfig& config, const Probe* init) {
  config.validate();
  if (labels.size() != x.rows()) fail(ErrorKind::Invariant, "train_probe: label count does not match rows");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorKind::InputData, "train_probe: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size()) fail(ErrorKind::InputData, "degenerate training set");

  const std::size_t d = x.dim();
  Probe p;
  if (init != nullptr) {
    if (init->weights.size() != d) fail(ErrorKind::Invariant, "train_probe: initial weights have wrong dim");
    p.weights = init->weights;
    p.bias = init->bias;
  } else {
    p.weights.assign(d, 0.0);
  }

  std::vector<double> gw(d);
  double gb = 0.0;
  double step = config.learning_rate;
  double loss = objective(p, x, labels, config.l2_penalty);
  if (!std::isfinite(loss)) fail(ErrorKind::InputData, "train_probe: NaN loss at epoch 0");
  Probe trial;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    gradient(p, x, labels, config.l2_penalty, gw, gb);
    while (true) {
      trial.weights = p.weights;
      for (std::size_t j = 0; j < d; ++j) trial.weights[j] -= step * gw[j];
      trial.bias = p.bias - step * gb;
      const double next = objective(trial, x, labels, config.l2_penalty);
      if (std::isnan(next)) fail(ErrorKind::InputData, fmt::format("train_probe: NaN loss at epoch {}", epoch));
      if (next <= loss) {
        p.weights.swap(trial.weights);
        p.bias = trial.bias;
        loss = next;
        break;
      }
      step *= 0.5;
      if (step < 1e-30) break;  // no descent direction left at this precision
    }
    p.loss_history.push_back(loss);
  }
  return p;
}

double predict_proba(const Probe& probe, std::span<const float> row) {
  return sigmoid(margin(probe, row.data(), row.size()));
}

Metrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) fail(ErrorKind::Invariant, "metrics: size mismatch");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == 1;
    const bool truth = labels[i] == 1;
    if (pred && truth) ++m.tp;
    else if (pred && !truth) ++m.fp;
    else if (!pred && truth) ++m.fn;
    else ++m.tn;
  }
  const std::size_t total = labels.size();
  m.accuracy = total == 0 ? 0.0 : static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
  // Harmonic mean of precision and recall as one rounding: 2TP / (2TP + FP + FN).
  m.f1 = m.tp == 0 ? 0.0 : static_cast<double>(2 * m.tp) / static_cast<double>(2 * m.tp + m.fp + m.fn);
  return m;
}

Metrics evaluate(const Probe& probe, const EmbeddingMatrix& x, std::span<const int> labels) {
  if (x.empty()) fail(ErrorKind::InputData, "evaluate: empty test set");
  std::vector<int> pred(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) pred[i] = predict_proba(probe, x.row(i)) >= 0.5 ? 1 : 0;
  return confusion_metrics(pred, labels);
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Curated: return "curated";
    case Regime::Random: return "random";
    case Regime::Zero: return "zero";
    case Regime::Full: return "full";
  }
  return "unknown";
}

SplitSpec split_corpus(const Corpus& corpus, double train_share, double val_share, std::uint64_t seed) {
  if (!(train_share >= 0 && val_share >= 0 && train_share + val_share <= 1.0 + 1e-12))
    fail(ErrorKind::Config, fmt::format("bad split shares {}/{}", train_share, val_share));
  const std::size_t n = corpus.size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(rows));
  const std::size_t n_train = fraction_floor(train_share, n);
  const std::size_t n_val = std::min(n - n_train, fraction_floor(val_share, n));

  auto collect = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(lo),
                                  rows.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(part.begin(), part.end());
    std::vector<std::string> ids;
    ids.reserve(part.size());
    for (auto r : part) ids.push_back(corpus[r].id);
    return ids;
  };
  SplitSpec split;
  split.seed = seed;
  split.train_ids = collect(0, n_train);
  split.val_ids = collect(n_train, n_train + n_val);
  split.test_ids = collect(n_train + n_val, n);
  return split;
}

std::string format_split(const SplitSpec& split) {
  std::string out = fmt::format("# realsub split v1 seed={}\n", split.seed);
  auto section = [&](std::string_view name, const std::vector<std::string>& ids) {
    out += fmt::format("[{}]\n", name);
    for (const auto& id : ids) out += id + "\n";
  };
  section("train", split.train_ids);
  section("val", split.val_ids);
  section("test", split.test_ids);
  return out;
}

SplitSpec parse_split(std::string_view content, std::string_view origin) {
  SplitSpec split;
  std::vector<std::string>* target = nullptr;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    if (line.empty()) continue;
    if (line.starts_with("# realsub split v1 seed=")) {
      split.seed = std::stoull(std::string(line.substr(24)));
    } else if (line == "[train]") {
      target = &split.train_ids;
    } else if (line == "[val]") {
      target = &split.val_ids;
    } else if (line == "[test]") {
      target = &split.test_ids;
    } else if (target == nullptr) {
      fail(ErrorKind::InputData, fmt::format("{}: id before any section", origin));
    } else {
      target->emplace_back(line);
    }
  }
  return split;
}

std::vector<int> labels_for(const Corpus& corpus, const EmbeddingMatrix& emb) {
  std::vector<int> labels(emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    auto r = corpus.find(emb.ids()[i]);
    if (!r) fail(ErrorKind::InputData, fmt::format("embedding id '{}' is not in the corpus", emb.ids()[i]));
    labels[i] = corpus[*r].label;
  }
  return labels;
}

namespace {

struct Part {
  EmbeddingMatrix x;
  std::vector<int> y;
};

std::vector<std::size_t> rows_of(const EmbeddingMatrix& emb, const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < emb.rows(); ++i) pos.emplace(emb.ids()[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) fail(ErrorKind::InputData, fmt::format("id '{}' has no embedding", id));
    rows.push_back(it->second);
  }
  // Row order fixes the floating-point summation order during training.
  std::sort(rows.begin(), rows.end());
  return rows;
}

Part make_part(const Corpus& corpus, const EmbeddingMatrix& emb, const std::vector<std::string>& ids) {
  Part p{emb.select_rows(rows_of(emb, ids)), {}};
  p.y = labels_for(corpus, p.x);
  return p;
}

bool single_class(const std::vector<int>& y) {
  return std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); });
}

struct Cell {
  Regime regime;
  double phi;
  std::uint64_t seed;
};

}  // namespace

std::vector<EvalResult> run_regime_grid(const GridInputs& in, const GridConfig& config) {
  config.probe.validate();
  if (in.unrealistic_emb.dim() != in.realworld_emb.dim())
    fail(ErrorKind::InputData, "eval: unrealistic and real-world embeddings differ in dim");
  for (double phi : config.phis)
    if (!(phi >= 0.0 && phi <= 1.0)) fail(ErrorKind::Config, fmt::format("phi {} outside [0,1]", phi));
  if (config.require_train_neighbors) {
    std::unordered_set<std::string_view> train(in.split.train_ids.begin(), in.split.train_ids.end());
    for (const auto& r : in.records)
      if (!train.contains(r.neighbor_id))
        fail(ErrorKind::InputData,
             fmt::format("distance record for '{}' points at '{}', outside the real-world train split", r.query_id,
                         r.neighbor_id));
  }

  const Part r_train = make_part(in.realworld, in.realworld_emb, in.split.train_ids);
  const Part r_test = make_part(in.realworld, in.realworld_emb, in.split.test_ids);
  if (r_test.x.empty()) fail(ErrorKind::InputData, "eval: real-world test split is empty");
  if (single_class(r_train.y)) fail(ErrorKind::InputData, "eval: real-world train split is single-class");

  std::vector<Cell> cells;
  for (auto seed : config.seeds) {
    for (double phi : config.phis) {
      cells.push_back({Regime::Curated, phi, seed});
      cells.push_back({Regime::Random, phi, seed});
    }
    cells.push_back({Regime::Zero, 0.0, seed});
    cells.push_back({Regime::Full, 1.0, seed});
  }

  std::vector<EvalResult> results(cells.size());
  parallel_for(cells.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const Cell& cell = cells[c];
      EvalResult res;
      res.regime = cell.regime;
      res.phi_or_fraction = cell.phi;
      res.seed = cell.seed;

      std::vector<std::string> subset;
      switch (cell.regime) {
        case Regime::Curated:
          subset = select_subset(in.records, cell.phi).selected_ids;
          break;
        case Regime::Random: {
          const auto target = select_subset(in.records, cell.phi).manifest.selected_count;
          subset = random_subset_of_size(in.unrealistic, target, derive_seed(cell.seed, 0x5eed)).selected_ids;
          break;
        }
        case Regime::Zero:
          break;
        case Regime::Full:
          subset = in.unrealistic.ids();
          break;
      }

      ProbeConfig probe_cfg = config.probe;
      probe_cfg.seed = cell.seed;
      Probe probe;
      const Probe* init = nullptr;
      if (!subset.empty()) {
        const Part phase1 = make_part(in.unrealistic, in.unrealistic_emb, subset);
        if (single_class(phase1.y)) {
          res.train_size = phase1.y.size();
          res.skipped_reason = fmt::format("degenerate subset: all {} samples have label {}", phase1.y.size(),
                                           phase1.y.front());
          results[c] = res;
          continue;
        }
        probe = train_probe(phase1.x, phase1.y, probe_cfg);
        init = &probe;
        res.train_size += phase1.y.size();
      }
      Probe tuned = train_probe(r_train.x, r_train.y, probe_cfg, init);
      res.train_size += r_train.y.size();
      const auto m = evaluate(tuned, r_test.x, r_test.y);
      res.accuracy = m.accuracy;
      res.f1 = m.f1;
      results[c] = res;
    }
  });

  std::sort(results.begin(), results.end(), [](const EvalResult& a, const EvalResult& b) {
    const auto ra = to_string(a.regime), rb = to_string(b.regime);
    if (ra != rb) return ra < rb;
    if (a.phi_or_fraction != b.phi_or_fraction) return a.phi_or_fraction < b.phi_or_fraction;
    return a.seed < b.seed;
  });
  return results;
}

std::string format_eval_results(const std::vector<EvalResult>& results) {
  std::string out = "regime,phi_or_fraction,seed,train_size,accuracy,f1,skipped_reason\n";
  for (const auto& r : results) {
    if (r.skipped_reason.empty()) {
      out += fmt::format("{},{},{},{},{:.6f},{:.6f},\n", to_string(r.regime), r.phi_or_fraction, r.seed,
                         r.train_size, r.accuracy, r.f1);
    } else {
      out += fmt::format("{},{},{},{},,,\"{}\"\n", to_string(r.regime), r.phi_or_fraction, r.seed, r.train_size,
                         r.skipped_reason);
    }
  }
  return out;
}

std::string format_eval_summary(const std::vector<EvalResult>& results) {
  struct Acc {
    std::size_t runs = 0, skipped = 0;
    double accuracy = 0, f1 = 0;
  };
  std::map<std::pair<std::string, double>, Acc> groups;
  for (const auto& r : results) {
    auto& g = groups[{std::string(to_string(r.regime)), r.phi_or_fraction}];
    if (!r.skipped_reason.empty()) {
      ++g.skipped;
      continue;
    }
    ++g.runs;
    g.accuracy += r.accuracy;
    g.f1 += r.f1;
  }
  std::string out = "regime,phi_or_fraction,runs,skipped,mean_accuracy,mean_f1\n";
  for (const auto& [key, g] : groups) {
    const double n = g.runs == 0 ? 1.0 : static_cast<double>(g.runs);
    out += fmt::format("{},{},{},{},{:.6f},{:.6f}\n", key.first, key.second, g.runs, g.skipped, g.accuracy / n,
                       g.f1 / n);
  }
  return out;
}

void SynthConfig::validate() const {
  if (!(realistic_fraction >= 0.0 && realistic_fraction <= 1.0))
    fail(ErrorKind::Config, "synth realistic_fraction outside [0,1]");
  if (!(noise_label_rate >= 0.0 && noise_label_rate <= 1.0))
    fail(ErrorKind::Config, "synth noise_label_rate outside [0,1]");
  if (dim < 2) fail(ErrorKind::Config, "synth dim must be >= 2");
  if (!(sigma > 0.0)) fail(ErrorKind::Config, "synth sigma must be positive");
  if (far_offset - class_separation / 2 < 10.0)
    fail(ErrorKind::Config, "synth far cluster must sit at least 10 sigma from both class means");
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& e : v) {
      e = rng.normal();
      sq += e * e;
    }
  } while (sq == 0.0);
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& e : v) e *= inv;
  return v;
}

std::string coords_text(const std::vector<float>& x, double sigma) {
  std::string text = "int f() {";
  for (std::size_t j = 0; j < x.size(); ++j) {
    const long q = std::lround(std::clamp(x[j] / sigma, -30.0, 30.0));
    text += fmt::format(" d{}{}{}", j, q < 0 ? 'n' : 'p', std::labs(q));
  }
  text += " }";
  return text;
}

}  // namespace

SynthBenchmark synth_benchmark(const SynthConfig& config) {
  config.validate();
  const std::size_t d = config.dim;
  const double sigma = config.sigma;
  Rng rng(config.seed);
  const auto axis = random_unit(rng, d);
  const auto shift_dir = random_unit(rng, d);

  // Class means at -/+ separation/2 along `axis`.
  std::vector<double> mu[2] = {std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t j = 0; j < d; ++j) {
    mu[0][j] = -0.5 * config.class_separation * sigma * axis[j];
    mu[1][j] = 0.5 * config.class_separation * sigma * axis[j];
  }
  auto draw = [&](int label, bool far) {
    std::vector<float> x(d);
    for (std::size_t j = 0; j < d; ++j) {
      double v = mu[label][j] + sigma * rng.normal();
      if (far) v += config.far_offset * sigma * shift_dir[j];
      x[j] = static_cast<float>(v);
    }
    return x;
  };

  SynthBenchmark out;
  {
    std::vector<Sample> samples;
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < config.n_real; ++i) {
      const int label = rng.uniform() < 0.5 ? 0 : 1;
      auto x = draw(label, false);
      Sample s{fmt::format("r-{:06d}", i), coords_text(x, sigma), label, "synth-real"};
      ids.push_back(s.id);
      samples.push_back(std::move(s));
      data.insert(data.end(), x.begin(), x.end());
    }
    out.realworld = Corpus(CorpusKind::RealWorld, std::move(samples));
    out.realworld_emb = EmbeddingMatrix(d, std::move(ids), std::move(data), false);
  }
  {
    const std::size_t n_realistic = fraction_floor(config.realistic_fraction, config.n_unreal);
    std::vector<char> realistic(config.n_unreal, 0);
    for (auto r : sample_without_replacement(config.n_unreal, n_realistic, rng.next())) realistic[r] = 1;

    std::vector<Sample> samples;
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < config.n_unreal; ++i) {
      int label = rng.uniform() < 0.5 ? 0 : 1;
      auto x = draw(label, !realistic[i]);
      if (!realistic[i] && rng.uniform() < config.noise_label_rate) label = 1 - label;
      Sample s{fmt::format("u-{:06d}", i), coords_text(x, sigma), label,
               realistic[i] ? "synth-realistic" : "synth-far"};
      if (realistic[i]) out.realistic_ids.push_back(s.id);
      ids.push_back(s.id);
      samples.push_back(std::move(s));
      data.insert(data.end(), x.begin(), x.end());
    }
    out.unrealistic = Corpus(CorpusKind::Unrealistic, std::move(samples));
    out.unrealistic_emb = EmbeddingMatrix(d, std::move(ids), std::move(data), false);
  }
  return out;
}

}  // namespace realsub
