#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hsseg {

/// Number of heart-sound regimes: S1, systole, S2, diastole.
inline constexpr int kNumRegimes = 4;

/// Regime labels used in annotation files and decoded state sequences.
/// Sequences are 1-based so that files and reports read as S1=1 ... Dia=4.
enum class Regime : int { S1 = 1, Systole = 2, S2 = 3, Diastole = 4 };

using StateSequence = std::vector<int>;

/// Cyclic successor of a 1-based regime label among `k` regimes.
constexpr int next_regime(int state, int k = kNumRegimes) {
  return state % k + 1;
}

struct Recording {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

/// Throws ValidationError unless rate > 0, samples nonempty and finite.
void validate_recording(const Recording& rec);

enum class RecordingFormat { Wav16Mono, CsvFloat };

/// Guess from extension: ".wav" is PCM, anything else the float CSV.
RecordingFormat format_from_path(const std::filesystem::path& path);

Recording load_recording(const std::filesystem::path& path,
                         RecordingFormat format);
inline Recording load_recording(const std::filesystem::path& path) {
  return load_recording(path, format_from_path(path));
}

/// Writes `sample_rate=<fs>` followed by one sample per line.
void save_recording_csv(const Recording& rec,
                        const std::filesystem::path& path);
/// 16-bit PCM mono. Samples are clipped to [-1, 1] and scaled by 32767.
void save_recording_wav(const Recording& rec,
                        const std::filesystem::path& path);

struct Interval {
  std::size_t start = 0;  // first sample
  std::size_t end = 0;    // one past the last sample
  int state = 1;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Contiguous labelled intervals covering [intervals.front().start, end).
struct AnnotationTrack {
  std::vector<Interval> intervals;

  std::size_t begin_sample() const {
    return intervals.empty() ? 0 : intervals.front().start;
  }
  std::size_t end_sample() const {
    return intervals.empty() ? 0 : intervals.back().end;
  }
  /// Per-sample labels over [begin_sample(), end_sample()).
  StateSequence expand() const;
  /// Run-length encoding of a label sequence, starting at sample 0.
  static AnnotationTrack from_states(const StateSequence& states);

  friend bool operator==(const AnnotationTrack&,
                         const AnnotationTrack&) = default;
};

/// Contiguity, positive lengths, labels in 1..4 and cyclic succession.
/// Errors name the offending 1-based row.
void validate_track(const AnnotationTrack& track);

AnnotationTrack load_annotations(const std::filesystem::path& path);
void save_annotations(const AnnotationTrack& track,
                      const std::filesystem::path& path);

enum class ClassLabel { Normal, Abnormal, XFactor, Noise };
enum class Quality { Good, Poor };

std::string_view to_string(ClassLabel label);
ClassLabel parse_class_label(std::string_view text);
std::string_view to_string(Quality quality);
Quality parse_quality(std::string_view text);

struct ManifestEntry {
  std::filesystem::path recording;
  std::optional<std::filesystem::path> annotation;
  ClassLabel label = ClassLabel::Normal;
  std::string split;  // "train", "test" or "fold-<k>"
  Quality quality = Quality::Good;

  /// Noise-labelled recordings never enter segmentation.
  bool excluded_from_segmentation() const {
    return label == ClassLabel::Noise;
  }
  /// Unsure recordings: the X-Factor class or any poor-quality entry.
  bool is_unsure() const {
    return label == ClassLabel::XFactor || quality == Quality::Poor;
  }
  std::string id() const { return recording.stem().string(); }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  DatasetManifest with_split(std::string_view split) const;
};

/// CSV with header `path,annotation,label,split[,quality]`. Relative paths
/// resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Paths are written as stored (absolute after load_manifest).
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

/// Anti-alias low-pass then polyphase decimation to `target_rate`.
/// Output length is floor(n * target / source). Identity rates copy.
Recording resample(const Recording& rec, int target_rate);

}  // namespace hsseg
