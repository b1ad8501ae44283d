#pragma once

#include <Eigen/Dense>
#include <array>
#include <nlohmann/json.hpp>
#include <span>

#include "hsseg/signal_io.hpp"

namespace hsseg {

struct HeartRateEstimate {
  double hr = 60.0;     // beats per minute
  double t_sys = 0.3;   // seconds from S1 onset to S2 onset
  double peak = 0.0;    // normalised autocorrelation at the heart-cycle lag
  bool confident = true;

  /// 30 <= hr <= 200 and 0.1 <= t_sys <= 60/hr.
  void validate() const;
};

struct HeartRateOptions {
  double min_bpm = 30.0;
  double max_bpm = 200.0;
  double envelope_cutoff_hz = 20.0;
  /// Below this normalised autocorrelation the estimate is flagged
  /// low-confidence.
  double min_peak = 0.2;
};

/// Heart rate from the autocorrelation of the signal envelope (|x| low-passed
/// at `envelope_cutoff_hz`). The systolic interval is the strongest
/// autocorrelation lag in [0.2, 0.5] of the heart-cycle lag. Needs >= 5 s.
HeartRateEstimate estimate_heart_rate(std::span<const double> signal, double fs,
                                      const HeartRateOptions& opts = {});

/// Per-regime dwell statistics in seconds (index j-1 for regime j).
struct DurationStats {
  std::array<double, kNumRegimes> mean_s{};
  std::array<double, kNumRegimes> sd_s{};
};

/// Interval-length statistics from annotations; the truncated first and
/// last interval of each track are skipped when interior intervals exist.
DurationStats duration_stats_from_tracks(std::span<const AnnotationTrack> tracks,
                                         double fs);

nlohmann::json to_json(const DurationStats& stats);
DurationStats duration_stats_from_json(const nlohmann::json& doc);

struct DurationModel {
  Eigen::MatrixXd dP;  // K x d_max; column d-1 holds P(duration = d)
  int d_max = 1;

  void validate() const;
};

/// d_max = round(60 fs / hr). Rows are Gaussians discretised on [1, d_max]
/// and renormalised: S1/S2 from training stats, systole from t_sys minus S1,
/// diastole taking the rest of the cycle. Non-positive sd gives a one-hot row.
DurationModel build_duration_model(const HeartRateEstimate& hr,
                                   const DurationStats& stats, double fs);

/// a_ij = 1 for j = successor(i), zero elsewhere.
Eigen::MatrixXd cyclic_successor_matrix(int k);

struct DurationViterbiResult {
  StateSequence path;  // 1-based, length T
  double log_score = 0.0;
};

/// Duration-dependent Viterbi over SKF state probabilities.
///
/// A path is a sequence of segments (state s_n, duration d_n) with
/// 1 <= d_n <= d_max covering the T samples; the last segment may run up to
/// d_max - 1 samples past the end. Its log score is
///   log pi0[s_1] + sum_{n>1} (log a[s_{n-1}][s_n] + log dP[s_n][d_n])
///   + sum_{t<T} log M[t][q_t],
/// where the first segment is left-truncated and so carries no duration
/// term. Ties go to the shorter duration, then the lower predecessor index,
/// then the earlier termination time and the lower final state.
DurationViterbiResult skf_viterbi(const Eigen::MatrixXd& M, const DurationModel& dm,
                                  const Eigen::MatrixXd& a, const Eigen::VectorXd& pi0);

}  // namespace hsseg
