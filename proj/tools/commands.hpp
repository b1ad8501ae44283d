#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hsseg/eval.hpp"
#include "hsseg/pipeline.hpp"

namespace hsseg::tools {

namespace fs = std::filesystem;

/// Options shared by every subcommand. `overrides` are `key=value` pairs
/// applied after the config file.
struct CommonOptions {
  fs::path manifest;
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  std::optional<int> jobs;
  std::optional<fs::path> output_dir;
  std::optional<fs::path> model_dir;
};

/// Config file, then overrides, then explicit flags; validated.
PipelineConfig resolve_config(const CommonOptions& common);

struct IngestResult {
  std::size_t entries = 0;
  std::size_t annotated = 0;
  std::vector<std::pair<std::string, std::size_t>> per_label;
  std::vector<std::pair<std::string, std::size_t>> per_split;
};

/// Loads and validates every recording and annotation. With `kfold` set,
/// writes fold-<i>-train.csv / fold-<i>-test.csv into the output directory.
IngestResult cmd_ingest(const CommonOptions& common, std::optional<int> kfold, std::ostream& log);

/// Writes <out>/preprocessed/<id>.csv for every entry.
void cmd_preprocess(const CommonOptions& common, std::ostream& log);

enum class TrainTarget { Segmenter, Classifier };

/// Writes <models>/segmenter.json or <models>/classifier.json and a training
/// log beside it.
void cmd_train(const CommonOptions& common, TrainTarget target, std::ostream& log);

struct SegmentOptions {
  std::optional<InferenceMethod> method;
  bool dump_trajectory = false;
};

/// Segments the test split (every entry when the manifest has none) and
/// scores the annotated ones. Returns the per-recording rows.
std::vector<RecordingSegResult> cmd_segment(const CommonOptions& common, const SegmentOptions& opts,
                                            std::ostream& log);

struct ClassifyOptions {
  bool xfactor = false;
};

struct ClassifySummary {
  std::size_t beats = 0;
  std::size_t recordings = 0;
  std::optional<double> beat_accuracy;  // over beats with a normal/abnormal reference
  ClassMetrics beat_metrics;
  std::optional<XFactorMetrics> xfactor_metrics;
  std::optional<double> penalized_f1;
};

ClassifySummary cmd_classify(const CommonOptions& common, const ClassifyOptions& opts, std::ostream& log);

/// Scores <pred_dir>/<id>.seg.csv against the manifest annotations.
std::vector<RecordingSegResult> cmd_evaluate(const CommonOptions& common, const fs::path& pred_dir,
                                             std::ostream& log);

struct SynthOptions {
  int train_count = 10;
  int test_count = 50;
  double seconds = 8.0;
  std::uint64_t seed = 1;
  std::optional<fs::path> model;  // MSAR JSON; demo parameters otherwise
};

/// Writes recordings, annotations and manifest.csv into the output directory.
fs::path cmd_synth(const CommonOptions& common, const SynthOptions& opts, std::ostream& log);

}  // namespace hsseg::tools
