#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hsseg/signal_io.hpp"

namespace hsseg {

struct RegimeCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

struct SegConfusion {
  std::vector<RegimeCounts> regimes;  // index j-1 for regime j
  std::int64_t total = 0;

  void validate() const;
  SegConfusion& operator+=(const SegConfusion& other);
};

/// Sample-wise counts with zero boundary tolerance.
SegConfusion segmentation_confusion(const StateSequence& pred, const StateSequence& ref,
                                    int k = kNumRegimes);

/// Ratios as fractions in [0, 1]; 0/0 is absent.
struct RatioSet {
  std::optional<double> se;
  std::optional<double> ppv;
  std::optional<double> f1;
};

struct SegMetrics {
  std::vector<RatioSet> per_regime;
  std::optional<double> acc;
};

SegMetrics seg_metrics(const SegConfusion& c);

std::optional<double> f1_from(std::optional<double> se, std::optional<double> ppv);

struct ClassMetrics {
  std::optional<double> se;
  std::optional<double> sp;
  std::optional<double> ppv;
  std::optional<double> acc;
  std::optional<double> f1;
};

/// Throws ValidationError when every count is zero or any is negative.
ClassMetrics class_metrics_plain(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn);

/// Reference class x predicted class counts, split by recording quality
/// (index 0 good, 1 poor). Predicted columns: a(bnormal), q (X-Factor), n(ormal).
struct XFactorConfusion {
  std::array<std::int64_t, 2> aa{}, aq{}, an{};
  std::array<std::int64_t, 2> na{}, nq{}, nn{};
  std::array<double, 2> wa{1.0, 0.0};
  std::array<double, 2> wn{1.0, 0.0};

  void validate() const;
};

struct XFactorMetrics {
  double se = 0.0;
  double sp = 0.0;
  double macc = 0.0;
  // Terms whose denominator was zero; they contribute nothing to the sum.
  std::vector<std::string> absent_terms;
};

XFactorMetrics class_metrics_xfactor(const XFactorConfusion& x);

double penalized_f1(std::int64_t aa1, std::int64_t an1, std::int64_t na1, std::int64_t aq1,
                    std::int64_t nq1, double alpha = 10.0);

/// Fraction of good-quality entries among those labelled `label`, as the
/// (good, poor) weight pair. Returns (1, 0) when the class is empty.
std::array<double, 2> quality_weights(const DatasetManifest& train, ClassLabel label);

struct Fold {
  DatasetManifest train;
  DatasetManifest test;
};

/// Stratified by class label: each class is shuffled with `seed` and dealt
/// round-robin into k test folds.
std::vector<Fold> kfold_split(const DatasetManifest& manifest, int k, std::uint64_t seed);

struct MeanSd {
  std::optional<double> mean;
  std::optional<double> sd;  // sample SD; absent below two values
  std::size_t n = 0;
};

/// Absent values are skipped.
MeanSd mean_sd(const std::vector<std::optional<double>>& values);

struct RecordingSegResult {
  std::string id;
  SegMetrics metrics;
};

/// Per-recording rows plus mean and SD rows; metrics in percent.
void write_seg_report_csv(const std::vector<RecordingSegResult>& rows, std::ostream& out);
void write_seg_report_table(const std::vector<RecordingSegResult>& rows, std::ostream& out);

std::string format_percent(const std::optional<double>& v);

}  // namespace hsseg
