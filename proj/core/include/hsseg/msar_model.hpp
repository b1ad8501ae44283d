#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "hsseg/signal_io.hpp"

namespace hsseg {

/// Parameters of the Markov-switching AR model with additive observation
/// noise:  x_t = sum_p phi[S_t][p] x_{t-p} + eta_t,  y_t = x_t + eps_t,
/// eta_t ~ N(0, q[S_t]),  eps_t ~ N(0, R[S_t]),  P(S_t=j | S_{t-1}=i) = Z(i,j).
struct MsarParams {
  int K = kNumRegimes;
  int P = 4;
  Eigen::MatrixXd phi;  // K x P
  Eigen::VectorXd q;    // K
  Eigen::VectorXd R;    // K
  Eigen::MatrixXd Z;    // K x K, rows sum to one

  /// Shapes, probability rows, q >= 0, R > 0 and the cyclic left-to-right
  /// mask (z_ij = 0 unless j == i or j is the successor of i).
  void validate() const;
};

/// 1 where the cyclic left-to-right chain allows a transition.
Eigen::MatrixXd cyclic_mask(int k);

/// Companion-form switching linear-Gaussian view of MsarParams.
struct StateSpaceView {
  std::vector<Eigen::MatrixXd> A;  // K companion matrices, P x P
  Eigen::RowVectorXd C;            // [1, 0, ..., 0]
  std::vector<Eigen::MatrixXd> Q;  // q_j at (0,0), zero elsewhere
  Eigen::VectorXd R;

  int regimes() const { return static_cast<int>(A.size()); }
  int order() const { return static_cast<int>(C.size()); }
};

StateSpaceView to_state_space(const MsarParams& params);

/// Samples grouped by annotated regime, each group in temporal order.
struct ClusteredSeries {
  std::vector<std::vector<double>> series;  // index j-1 for regime j

  std::size_t total() const;
};

ClusteredSeries dynamic_cluster(const Recording& rec, const AnnotationTrack& track,
                                int k = kNumRegimes);

struct ArFit {
  Eigen::VectorXd phi;
  double q = 0.0;  // mean squared one-step residual, divided by series length
};

/// Least-squares AR(order) fit without intercept.
ArFit fit_ar_least_squares(std::span<const double> series, int order);

/// Least-squares AR(order) fit of the samples labelled `state`, with each
/// sample regressed on the preceding samples of the full recording (lags may
/// fall in the previous regime). q is the residual sum of squares divided by
/// the number of samples in the regime.
ArFit fit_ar_regime(std::span<const double> signal, const AnnotationTrack& track,
                    int state, int order);

/// Mean AR(order) residual variance over consecutive windows of `window`
/// samples. Windows without variance contribute nothing.
double estimate_obs_noise(std::span<const double> signal, int order,
                          std::size_t window);

/// Transition frequencies pooled over tracks. Each annotated interval counts
/// as a completed sojourn: length-1 self transitions and one exit to its
/// cyclic successor. Forbidden entries are exact zeros.
Eigen::MatrixXd init_transition_matrix(std::span<const AnnotationTrack> tracks,
                                       int k = kNumRegimes);

/// Element-wise mean of phi, q, R and Z (rows renormalised). Optional
/// non-negative weights give a weighted mean instead.
MsarParams pool_parameters(std::span<const MsarParams> per_recording,
                           std::span<const double> weights = {});

struct MsarFitOptions {
  int order = 4;
  double noise_window_seconds = 1.0;
  bool shared_obs_noise = true;  // one R for every regime
  /// Regress on lags from the recording itself (fit_ar_regime) rather than
  /// on the per-regime concatenation, whose joins splice unrelated samples.
  bool boundary_lags = true;
};

/// Per-recording initial estimates from a labelled (preprocessed) recording.
MsarParams fit_msar(const Recording& rec, const AnnotationTrack& track,
                    const MsarFitOptions& opts);

/// Refit phi/q/Z against a new labelling of the same recording (one
/// refinement pass against a decoded segmentation). R is kept.
MsarParams refit_msar(const Recording& rec, const AnnotationTrack& track,
                      const MsarParams& previous, const MsarFitOptions& opts);

nlohmann::json to_json(const MsarParams& params);
MsarParams msar_from_json(const nlohmann::json& doc);

}  // namespace hsseg
