#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hsseg/msar_model.hpp"
#include "hsseg/signal_io.hpp"

namespace hsseg {

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct KalmanStep {
  GaussianBelief posterior;
  double loglik = 0.0;  // log N(innovation; 0, S)
};

/// One predict/update cycle of a scalar-observation Kalman filter.
KalmanStep kalman_filter_step(const GaussianBelief& prior, double y,
                              const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C,
                              const Eigen::MatrixXd& Q, double R);

/// Moment-matched single Gaussian for a weighted mixture.
GaussianBelief collapse(std::span<const Eigen::VectorXd> means,
                        std::span<const Eigen::MatrixXd> covs,
                        std::span<const double> weights);

/// Symmetrise and lift eigenvalues below `floor` to `floor`.
void regularize_covariance(Eigen::MatrixXd& cov, double floor);

struct FilteredTrajectory {
  std::vector<std::vector<GaussianBelief>> beliefs;  // [t][j]
  Eigen::MatrixXd M;                                 // T x K, M(t,j) = P(S_t=j | y_1..t)
  double loglik = 0.0;
  std::vector<std::size_t> recovered_steps;  // steps where every pair underflowed
};

struct SmoothedTrajectory {
  std::vector<std::vector<GaussianBelief>> beliefs;  // [t][j]
  Eigen::MatrixXd M;                                 // T x K, P(S_t=j | y_1..T)
};

struct SkfOptions {
  /// Initial regime probabilities; defaults to [1, 0, ..., 0].
  std::optional<Eigen::VectorXd> initial_probs;
  /// Initial state belief shared by every regime; defaults to zero mean and
  /// identity covariance scaled by the variance of the first second.
  std::optional<GaussianBelief> initial_belief;
  double sample_rate = 1000.0;  // only used for the default initial belief
  /// On total underflow, fall back to the transition-propagated prior
  /// instead of throwing.
  bool recover_degenerate = true;
  double eigen_floor = 1e-12;
};

GaussianBelief default_initial_belief(std::span<const double> y, int order,
                                      double sample_rate);

/// Switching Kalman filter: K^2 Kalman filters per step, pair weights
/// L^{ij} z_ij M^i_{t-1} normalised in the log domain, per-regime collapse.
FilteredTrajectory skf(std::span<const double> y, const StateSpaceView& ssv,
                       const Eigen::MatrixXd& Z, const SkfOptions& opts = {});

/// Switching RTS smoother over a completed forward pass.
SmoothedTrajectory sks(const FilteredTrajectory& fwd, const StateSpaceView& ssv,
                       const Eigen::MatrixXd& Z, double eigen_floor = 1e-12);

/// Per-row argmax (1-based labels, lowest index wins ties).
StateSequence decode_map_states(const Eigen::MatrixXd& M);

/// CSV `t,M1,...,MK,map_state`.
void write_trajectory_csv(const Eigen::MatrixXd& M, const std::filesystem::path& path);

}  // namespace hsseg
