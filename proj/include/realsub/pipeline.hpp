#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "realsub/config.hpp"
#include "realsub/embedding.hpp"
#include "realsub/eval.hpp"
#include "realsub/knn.hpp"

namespace realsub {

enum class Stage { Ingest, Dedup, Embed, Index, Distances, Select, Report, Eval, Synth, All };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

/// Stages chained by `all`, in order.
const std::vector<Stage>& pipeline_stages();

struct PipelineConfig {
  std::filesystem::path unrealistic_path;
  std::filesystem::path realworld_path;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 13;

  bool dedup_enabled = true;
  double dedup_threshold = 0.8;

  EmbedderConfig embed;
  /// Optional precomputed embeddings used instead of running the embedder.
  std::filesystem::path precomputed_unrealistic;
  std::filesystem::path precomputed_realworld;

  IndexParams index;
  bool include_test_split = false;
  double split_train = 0.7;
  double split_val = 0.1;

  std::vector<double> phis = {0.10, 0.25, 0.50, 0.75, 1.0};
  bool emit_split = true;
  double validation_share = 0.02;

  std::size_t histogram_bins = 50;
  std::size_t pca_cap = 1000;

  std::vector<double> eval_phis;  // empty: same as phis
  std::vector<std::uint64_t> eval_seeds = {1, 2, 3};
  ProbeConfig probe;

  SynthConfig synth;
  std::filesystem::path synth_output;  // empty: <output_dir>/synth

  /// Digest of the settings that shape artifacts (output dir excluded).
  std::string digest;

  /// Builds from a parsed document; unknown keys are rejected.
  static PipelineConfig from_doc(const ConfigDoc& doc);

  /// Checks value ranges and, for stages reading external inputs, that
  /// those inputs exist. Throws Config.
  void validate(Stage stage) const;
};

/// Runs one stage (or every stage for Stage::All) under an exclusive lock on
/// the output directory. Each stage writes into a staging directory and is
/// promoted by rename once complete.
void run_pipeline(Stage stage, const PipelineConfig& config);

}  // namespace realsub
