#pragma once

#include <Eigen/Dense>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsseg/mfcc.hpp"
#include "hsseg/signal_io.hpp"

namespace hsseg {

/// Diagonal-covariance Gaussian mixture.
struct GaussianMixture {
  Eigen::VectorXd weights;  // M
  Eigen::MatrixXd means;    // M x D
  Eigen::MatrixXd vars;     // M x D

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
  double log_density(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Left-to-right continuous-density HMM without skips: A(i,j) = 0 unless
/// j is i or i+1, and the last state only loops. A sequence must start in a
/// state allowed by pi and end in the last state.
struct HmmParams {
  Eigen::VectorXd pi;
  Eigen::MatrixXd A;
  std::vector<GaussianMixture> states;

  int num_states() const { return static_cast<int>(states.size()); }
  int dim() const { return states.empty() ? 0 : states.front().dim(); }
  void validate(double var_floor = 0.0) const;
};

struct HmmOptions {
  int states = 4;
  int mixtures = 16;
  double var_floor = 1e-6;
  int max_iter = 20;
  double tol = 1e-4;  // relative log-likelihood improvement
  unsigned seed = 1;
  int kmeans_iters = 100;
  int realign_rounds = 2;  // Viterbi realignments after the uniform split
};

/// Uniform state split, per-state K-means (k-means++ seeding, fixed seed),
/// then `realign_rounds` passes of Viterbi realignment and reclustering.
/// States with fewer distinct frames than mixtures get fewer components and
/// a message in `warnings`.
HmmParams segmental_kmeans_init(std::span<const FeatureSequence> data,
                                const HmmOptions& opts,
                                std::vector<std::string>* warnings = nullptr);

struct TrainingReport {
  std::vector<double> loglik;  // total log-likelihood before each M-step, plus the final one
  int iterations = 0;          // M-steps performed
  bool converged = false;
};

/// Baum-Welch re-estimation. Topology zeros are preserved; variances are
/// floored at opts.var_floor. Throws NumericalError on a NaN likelihood.
HmmParams baum_welch_train(const HmmParams& init, std::span<const FeatureSequence> data,
                           const HmmOptions& opts, TrainingReport* report = nullptr);

/// log P(O, q_F = last state).
double forward_loglik(const HmmParams& model, const FeatureSequence& features);

struct ViterbiScore {
  double loglik = 0.0;
  StateSequence path;  // 1-based, non-decreasing
};

ViterbiScore viterbi_loglik(const HmmParams& model, const FeatureSequence& features);

/// Models for the normal, abnormal and (optionally) X-Factor classes plus
/// the feature configuration they were trained on.
struct ClassifierBank {
  std::map<ClassLabel, HmmParams> models;
  MfccConfig features;

  bool has(ClassLabel label) const { return models.count(label) != 0; }
};

struct BeatDecision {
  ClassLabel label = ClassLabel::Normal;
  // Viterbi log-likelihood divided by the frame count, per enabled model.
  std::optional<double> score_normal;
  std::optional<double> score_abnormal;
  std::optional<double> score_xfactor;
};

/// Highest length-normalised Viterbi score among the enabled models; ties
/// resolve abnormal > xfactor > normal.
BeatDecision classify_beat(const ClassifierBank& bank, const FeatureSequence& features,
                           bool use_xfactor);

/// Plurality vote with the same tie order.
ClassLabel classify_recording(std::span<const ClassLabel> beat_labels);

struct BeatSegment {
  FeatureSequence features;
  std::string recording_id;
  ClassLabel label = ClassLabel::Normal;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Consecutive non-overlapping one-second windows; a trailing remainder is
/// dropped.
std::vector<std::pair<std::size_t, std::size_t>> one_second_windows(const Recording& rec);

std::vector<BeatSegment> window_xfactor(const Recording& rec, const MfccConfig& cfg,
                                        ClassLabel label = ClassLabel::XFactor);

nlohmann::json to_json(const HmmParams& model);
HmmParams hmm_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MfccConfig& cfg);
MfccConfig mfcc_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ClassifierBank& bank);
ClassifierBank classifier_bank_from_json(const nlohmann::json& doc);

}  // namespace hsseg
