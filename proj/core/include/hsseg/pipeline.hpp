#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsseg/duration_viterbi.hpp"
#include "hsseg/hmm.hpp"
#include "hsseg/mfcc.hpp"
#include "hsseg/msar_model.hpp"
#include "hsseg/preprocess.hpp"
#include "hsseg/signal_io.hpp"

namespace hsseg {

enum class InferenceMethod { Skf, Sks, SkfViterbi };

std::string_view to_string(InferenceMethod method);
InferenceMethod parse_inference_method(std::string_view text);

/// Everything a run needs besides the manifest. Serialised as flat
/// `dotted.key = value` lines.
struct PipelineConfig {
  PreprocessConfig preprocess;
  int working_rate = 1000;
  MsarFitOptions msar;
  bool weighted_pool = false;  // pool per-recording fits by length instead of equally
  MfccConfig mfcc;
  HmmOptions hmm;
  InferenceMethod method = InferenceMethod::SkfViterbi;
  std::uint64_t seed = 1;
  int folds = 5;
  double alpha = 10.0;
  std::filesystem::path model_dir = "models";
  std::filesystem::path output_dir = "out";
  int jobs = 1;

  void validate() const;
  /// Throws ValidationError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::map<std::string, std::string> to_map() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

/// Resample to the working rate, then filter, despike and normalise.
Recording prepare_recording(const Recording& raw, const PipelineConfig& cfg);

/// Map sample indices from `from_rate` to `to_rate`, clipping to `length`
/// samples. Intervals that vanish are merged into their predecessor.
AnnotationTrack rescale_track(const AnnotationTrack& track, int from_rate, int to_rate,
                              std::size_t length);

struct SegmenterModel {
  MsarParams params;
  DurationStats durations;
  int sample_rate = 1000;
};

nlohmann::json to_json(const SegmenterModel& model);
SegmenterModel segmenter_from_json(const nlohmann::json& doc);

/// Per-recording MSAR fits pooled into one parameter set, plus dwell
/// statistics from the same tracks.
SegmenterModel train_segmenter(std::span<const Recording> prepared,
                               std::span<const AnnotationTrack> tracks,
                               const PipelineConfig& cfg);

struct SegmentationResult {
  StateSequence states;
  Eigen::MatrixXd M;  // filtered or smoothed regime probabilities
  std::optional<HeartRateEstimate> heart_rate;
  std::size_t recovered_steps = 0;
};

SegmentationResult segment_recording(const Recording& prepared, const SegmenterModel& model,
                                     InferenceMethod method);

/// Complete beats [onset_n, onset_{n+1}) between consecutive S1 onsets.
/// The partial cycle before the first onset is dropped.
std::vector<std::pair<std::size_t, std::size_t>> beat_bounds(const StateSequence& states);

/// MFCC sequence per beat; beats shorter than one frame are skipped.
std::vector<BeatSegment> beat_features(const Recording& prepared, const StateSequence& states,
                                       const MfccConfig& cfg, ClassLabel label);

struct ClassTrainingLog {
  ClassLabel label = ClassLabel::Normal;
  std::size_t sequences = 0;
  TrainingReport report;
  std::vector<std::string> warnings;
};

/// Segmental K-means then Baum-Welch for every class present in `data`.
ClassifierBank train_classifier(const std::map<ClassLabel, std::vector<FeatureSequence>>& data,
                                const PipelineConfig& cfg,
                                std::vector<ClassTrainingLog>* log = nullptr);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results are expected
/// to be written by index so output order never depends on scheduling. The
/// exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace hsseg
