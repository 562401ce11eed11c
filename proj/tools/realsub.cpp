// realsub: curate the most realistic subset of an unrealistic corpus by
// nearest-neighbor distance to real-world samples.
//
// Settings precedence (later wins): built-in defaults, --config file,
// --set key=value overrides, dedicated flags.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "realsub/config.hpp"
#include "realsub/error.hpp"
#include "realsub/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string unrealistic;
  std::string realworld;
  std::vector<double> phis;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool verbose = false;
};

int report(realsub::ErrorKind kind, std::string_view detail) {
  std::fprintf(stderr, "realsub: error[%s]: %.*s\n", std::string(realsub::to_string(kind)).c_str(),
               static_cast<int>(detail.size()), detail.data());
  return static_cast<int>(kind);
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

int run(realsub::Stage stage, const Flags& f) {
  using realsub::ConfigDoc;
  ConfigDoc doc = f.config.empty() ? ConfigDoc{} : ConfigDoc::load(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      realsub::fail(realsub::ErrorKind::Config, fmt::format("--set expects key=value, got '{}'", kv));
    doc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!f.out.empty()) doc.set("paths.output", quote(f.out));
  if (!f.unrealistic.empty()) doc.set("paths.unrealistic", quote(f.unrealistic));
  if (!f.realworld.empty()) doc.set("paths.realworld", quote(f.realworld));
  if (f.seed) doc.set("run.seed", std::to_string(*f.seed));
  if (!f.phis.empty()) {
    std::string list = "[";
    for (std::size_t i = 0; i < f.phis.size(); ++i) list += fmt::format("{}{}", i ? ", " : "", f.phis[i]);
    doc.set("select.phis", list + "]");
  }
  const auto config = realsub::PipelineConfig::from_doc(doc);
  realsub::run_pipeline(stage, config);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"realsub: select the unrealistic samples closest to real-world data"};
  app.require_subcommand(1);
  Flags flags;

  const std::vector<std::pair<realsub::Stage, std::string>> stages = {
      {realsub::Stage::Ingest, "validate and canonicalize both corpora"},
      {realsub::Stage::Dedup, "drop near-duplicates by token Jaccard similarity"},
      {realsub::Stage::Embed, "embed both corpora"},
      {realsub::Stage::Index, "split the real-world corpus and build the nearest-neighbor index"},
      {realsub::Stage::Distances, "nearest real-world distance for every unrealistic sample"},
      {realsub::Stage::Select, "emit percentile-thresholded subsets"},
      {realsub::Stage::Report, "distance histogram, percentile table and 2-D projection"},
      {realsub::Stage::Eval, "linear-probe comparison of curated, random, zero and full regimes"},
      {realsub::Stage::Synth, "generate a synthetic benchmark with known realistic ids"},
      {realsub::Stage::All, "run ingest through eval"},
  };
  std::optional<realsub::Stage> chosen;
  for (const auto& [stage, help] : stages) {
    auto* sub = app.add_subcommand(std::string(realsub::to_string(stage)), help);
    sub->add_option("-c,--config", flags.config, "config file (key = value, [section] headers)");
    sub->add_option("-o,--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "global seed");
    sub->add_option("--unrealistic", flags.unrealistic, "unrealistic corpus (JSONL)");
    sub->add_option("--realworld", flags.realworld, "real-world corpus (JSONL)");
    sub->add_option("--phis", flags.phis, "percentile fractions to select")->delimiter(',');
    sub->add_option("--set", flags.overrides, "override a config key, e.g. --set index.mode=ivf");
    sub->add_flag("-q,--quiet", flags.quiet, "only log warnings and errors");
    sub->add_flag("-v,--verbose", flags.verbose, "debug logging");
    sub->callback([&chosen, stage] { chosen = stage; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(realsub::ErrorKind::Config, e.what());
  }

  auto logger = spdlog::stderr_color_mt("realsub");
  spdlog::set_default_logger(logger);
  spdlog::set_level(flags.quiet ? spdlog::level::warn : flags.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    return run(*chosen, flags);
  } catch (const realsub::Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(realsub::ErrorKind::Invariant, e.what());
  }
}
