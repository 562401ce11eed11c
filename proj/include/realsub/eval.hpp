#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "realsub/dataset.hpp"
#include "realsub/embedding.hpp"
#include "realsub/knn.hpp"

namespace realsub {

struct ProbeConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  double l2_penalty = 1e-4;
  /// Weights start at zero, so training itself is seed-free; the seed is
  /// carried for any sampling done around the probe.
  std::uint64_t seed = 0;

  void validate() const;
};

/// Logistic-regression weights and bias.
struct Probe {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> loss_history;  // one entry per epoch, non-increasing

  bool operator==(const Probe&) const = default;
};

/// Full-batch gradient descent on mean cross-entropy + (l2/2)|w|^2. A step
/// that would raise the loss is halved until it does not. Starts from
/// `init` when given (continued training), otherwise from zero.
Probe train_probe(const EmbeddingMatrix& x, std::span<const int> labels, const ProbeConfig& config,
                  const Probe* init = nullptr);

/// Objective value used by train_probe.
double probe_loss(const Probe& probe, const EmbeddingMatrix& x, std::span<const int> labels, double l2_penalty);

double predict_proba(const Probe& probe, std::span<const float> row);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Accuracy and positive-class F1 (0 when precision + recall = 0).
Metrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels);

/// Predicts 1 when p >= 0.5.
Metrics evaluate(const Probe& probe, const EmbeddingMatrix& x, std::span<const int> labels);

enum class Regime { Curated, Random, Zero, Full };
std::string_view to_string(Regime r);

struct EvalResult {
  Regime regime = Regime::Zero;
  double phi_or_fraction = 0.0;
  std::uint64_t seed = 0;
  /// Samples seen across both training phases.
  std::size_t train_size = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  /// Non-empty when the cell was skipped (e.g. single-class subset).
  std::string skipped_reason;

  bool operator==(const EvalResult&) const = default;
};

struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then floor(train*n) / floor(val*n) / rest. Each list
/// keeps corpus order.
SplitSpec split_corpus(const Corpus& corpus, double train_share, double val_share, std::uint64_t seed);

std::string format_split(const SplitSpec& split);
SplitSpec parse_split(std::string_view content, std::string_view origin = "<memory>");

/// Labels aligned with the rows of `emb` (looked up by id in `corpus`).
std::vector<int> labels_for(const Corpus& corpus, const EmbeddingMatrix& emb);

struct GridConfig {
  std::vector<double> phis;
  std::vector<std::uint64_t> seeds;
  ProbeConfig probe;
  /// Reject distance records whose neighbor lies outside the real-world
  /// train split (test leakage).
  bool require_train_neighbors = true;
};

struct GridInputs {
  const Corpus& unrealistic;
  const EmbeddingMatrix& unrealistic_emb;
  const Corpus& realworld;
  const EmbeddingMatrix& realworld_emb;
  const SplitSpec& split;
  const std::vector<DistanceRecord>& records;
};

/// Curated (percentile subset then real-world train), random (same-size
/// random subset then real-world train), zero (real-world train only) and
/// full (all unrealistic then real-world train), per phi and seed,
/// evaluated on the real-world test split. Sorted by (regime, phi, seed).
std::vector<EvalResult> run_regime_grid(const GridInputs& in, const GridConfig& config);

std::string format_eval_results(const std::vector<EvalResult>& results);
/// Mean accuracy/F1 per (regime, phi) over non-skipped rows.
std::string format_eval_summary(const std::vector<EvalResult>& results);

struct SynthConfig {
  std::size_t n_real = 1000;
  std::size_t n_unreal = 5000;
  double realistic_fraction = 0.3;
  std::size_t dim = 32;
  double noise_label_rate = 0.5;
  std::uint64_t seed = 0;
  double sigma = 1.0;
  /// Distance between the two class means, in sigmas.
  double class_separation = 4.0;
  /// Offset of the unrealistic-only cluster from the real data, in sigmas.
  double far_offset = 12.0;

  void validate() const;
};

struct SynthBenchmark {
  Corpus realworld;
  EmbeddingMatrix realworld_emb;
  Corpus unrealistic;
  EmbeddingMatrix unrealistic_emb;
  /// Unrealistic ids drawn from the real-world distribution, corpus order.
  std::vector<std::string> realistic_ids;
};

/// Real samples come from two class-conditional Gaussians; a fraction of
/// the unrealistic samples come from the same Gaussians with true labels,
/// the rest from a shifted copy far away with labels flipped at
/// noise_label_rate. Sample texts encode the rounded coordinates so the
/// mock embedder sees related token sets for nearby points.
SynthBenchmark synth_benchmark(const SynthConfig& config);

}  // namespace realsub
