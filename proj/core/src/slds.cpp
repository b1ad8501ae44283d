#include "hsseg/slds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "hsseg/error.hpp"

namespace hsseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * M_PI);

}  // namespace

KalmanStep kalman_filter_step(const GaussianBelief& prior, double y,
                              const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C,
                              const Eigen::MatrixXd& Q, double R) {
  if (!std::isfinite(y) || !std::isfinite(R) || !prior.mean.allFinite() ||
      !prior.cov.allFinite()) {
    throw ValidationError("kalman_filter_step: non-finite input");
  }
  const Eigen::VectorXd x_pred = A * prior.mean;
  Eigen::MatrixXd p_pred = A * prior.cov * A.transpose() + Q;
  p_pred = 0.5 * (p_pred + p_pred.transpose());

  const Eigen::VectorXd pc = p_pred * C.transpose();
  const double s = C.dot(pc) + R;
  if (!(s > 0.0)) throw NumericalError("kalman_filter_step: innovation variance <= 0");
  const double innov = y - C.dot(x_pred);
  const Eigen::VectorXd gain = pc / s;

  KalmanStep out;
  out.posterior.mean = x_pred + gain * innov;
  out.posterior.cov = p_pred - gain * gain.transpose() * s;
  out.posterior.cov = 0.5 * (out.posterior.cov + out.posterior.cov.transpose());
  out.loglik = -0.5 * (kLog2Pi + std::log(s) + innov * innov / s);
  return out;
}

GaussianBelief collapse(std::span<const Eigen::VectorXd> means,
                        std::span<const Eigen::MatrixXd> covs,
                        std::span<const double> weights) {
  if (means.empty() || means.size() != covs.size() || means.size() != weights.size()) {
    throw ValidationError("collapse: mismatched component lists");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("collapse: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("collapse: weights sum to " + std::to_string(total));
  }
  GaussianBelief out;
  out.mean = Eigen::VectorXd::Zero(means.front().size());
  for (std::size_t i = 0; i < means.size(); ++i) out.mean += weights[i] * means[i];
  out.cov = Eigen::MatrixXd::Zero(out.mean.size(), out.mean.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const Eigen::VectorXd d = means[i] - out.mean;
    out.cov += weights[i] * (covs[i] + d * d.transpose());
  }
  return out;
}

void regularize_covariance(Eigen::MatrixXd& cov, double floor) {
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= floor) return;
  const Eigen::VectorXd lifted = es.eigenvalues().cwiseMax(floor);
  cov = es.eigenvectors() * lifted.asDiagonal() * es.eigenvectors().transpose();
  cov = 0.5 * (cov + cov.transpose());
}

GaussianBelief default_initial_belief(std::span<const double> y, int order,
                                      double sample_rate) {
  const std::size_t n =
      std::min(y.size(), static_cast<std::size_t>(std::max(2.0, std::round(sample_rate))));
  double var = 1.0;
  if (n >= 2) {
    const double mean = std::accumulate(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
                        static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (y[i] - mean) * (y[i] - mean);
    var = ss / static_cast<double>(n - 1);
    if (!(var > 0.0)) var = 1.0;
  }
  return {Eigen::VectorXd::Zero(order), var * Eigen::MatrixXd::Identity(order, order)};
}

namespace {

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

FilteredTrajectory skf(std::span<const double> y, const StateSpaceView& ssv,
                       const Eigen::MatrixXd& Z, const SkfOptions& opts) {
  const int k = ssv.regimes();
  const int order = ssv.order();
  const auto steps = y.size();
  if (k < 1 || Z.rows() != k || Z.cols() != k) throw ValidationError("skf: Z shape mismatch");
  if (steps == 0) throw ValidationError("skf: empty observation sequence");

  Eigen::VectorXd m_prev;
  if (opts.initial_probs) {
    m_prev = *opts.initial_probs;
    if (m_prev.size() != k || std::abs(m_prev.sum() - 1.0) > 1e-9 || (m_prev.array() < 0.0).any()) {
      throw ValidationError("skf: initial probabilities must be a probability vector");
    }
  } else {
    m_prev = Eigen::VectorXd::Zero(k);
    m_prev(0) = 1.0;
  }
  const GaussianBelief init = opts.initial_belief
                                  ? *opts.initial_belief
                                  : default_initial_belief(y, order, opts.sample_rate);
  std::vector<GaussianBelief> prev(static_cast<std::size_t>(k), init);

  FilteredTrajectory out;
  out.M.resize(static_cast<Eigen::Index>(steps), k);
  out.beliefs.reserve(steps);

  Eigen::MatrixXd log_z(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) log_z(i, j) = safe_log(Z(i, j));

  std::vector<KalmanStep> pair(static_cast<std::size_t>(k * k));
  std::vector<double> log_w(static_cast<std::size_t>(k * k));
  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(k));
  std::vector<Eigen::MatrixXd> covs(static_cast<std::size_t>(k));
  std::vector<double> weights(static_cast<std::size_t>(k));

  for (std::size_t t = 0; t < steps; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(i * k + j);
        const double prior = log_z(i, j) + safe_log(m_prev(i));
        if (prior == kNegInf) {
          log_w[idx] = kNegInf;
          continue;
        }
        pair[idx] = kalman_filter_step(prev[static_cast<std::size_t>(i)], y[t],
                                       ssv.A[static_cast<std::size_t>(j)], ssv.C,
                                       ssv.Q[static_cast<std::size_t>(j)], ssv.R(j));
        log_w[idx] = pair[idx].loglik + prior;
      }
    }

    const double norm = log_sum_exp(log_w);
    const bool degenerate = !std::isfinite(norm);
    if (degenerate) {
      if (!opts.recover_degenerate) {
        throw NumericalError("skf: every regime pair underflowed at t=" + std::to_string(t));
      }
      // Continue from the transition-propagated prior, ignoring y_t.
      out.recovered_steps.push_back(t);
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          const auto idx = static_cast<std::size_t>(i * k + j);
          const double prior = log_z(i, j) + safe_log(m_prev(i));
          if (prior == kNegInf) {
            log_w[idx] = kNegInf;
            continue;
          }
          const auto& pb = prev[static_cast<std::size_t>(i)];
          const auto& a = ssv.A[static_cast<std::size_t>(j)];
          pair[idx].posterior.mean = a * pb.mean;
          pair[idx].posterior.cov = a * pb.cov * a.transpose() + ssv.Q[static_cast<std::size_t>(j)];
          log_w[idx] = prior;
        }
      }
    }
    const double log_norm = degenerate ? log_sum_exp(log_w) : norm;
    if (!std::isfinite(log_norm)) {
      throw NumericalError("skf: numerical degeneracy at t=" + std::to_string(t));
    }
    if (!degenerate) out.loglik += norm;

    std::vector<GaussianBelief> cur(static_cast<std::size_t>(k));
    Eigen::VectorXd m_cur(k);
    for (int j = 0; j < k; ++j) {
      double col_max = kNegInf;
      double mass = 0.0;
      for (int i = 0; i < k; ++i) {
        const double lw = log_w[static_cast<std::size_t>(i * k + j)];
        col_max = std::max(col_max, lw);
        mass += std::exp(lw - log_norm);
      }
      m_cur(j) = mass;
      auto& belief = cur[static_cast<std::size_t>(j)];
      if (col_max == kNegInf) {
        // Unreachable regime: keep its previous belief, it carries no weight.
        belief = prev[static_cast<std::size_t>(j)];
        continue;
      }
      // W^{i|j}, computed relative to the column maximum so it stays well
      // defined when M^j itself underflows.
      double wsum = 0.0;
      for (int i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(i * k + j);
        weights[static_cast<std::size_t>(i)] = std::exp(log_w[idx] - col_max);
        wsum += weights[static_cast<std::size_t>(i)];
      }
      for (int i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(i * k + j);
        auto& w = weights[static_cast<std::size_t>(i)];
        w /= wsum;
        if (w > 0.0) {
          means[static_cast<std::size_t>(i)] = pair[idx].posterior.mean;
          covs[static_cast<std::size_t>(i)] = pair[idx].posterior.cov;
        } else {
          means[static_cast<std::size_t>(i)] = Eigen::VectorXd::Zero(order);
          covs[static_cast<std::size_t>(i)] = Eigen::MatrixXd::Zero(order, order);
        }
      }
      belief = collapse(means, covs, weights);
      regularize_covariance(belief.cov, opts.eigen_floor);
    }
    m_cur /= m_cur.sum();
    out.M.row(ti) = m_cur.transpose();
    out.beliefs.push_back(cur);
    prev = std::move(cur);
    m_prev = m_cur;
  }
  return out;
}

namespace {

Eigen::MatrixXd smoother_gain(const Eigen::MatrixXd& p_filt, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& p_pred) {
  // J = P A' P_pred^{-1}; P_pred is symmetric so J' = P_pred^{-1} (A P).
  const Eigen::MatrixXd ap = a * p_filt;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(p_pred);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > 0.0) {
    return ldlt.solve(ap).transpose();
  }
  return p_pred.completeOrthogonalDecomposition().solve(ap).transpose();
}

}  // namespace

SmoothedTrajectory sks(const FilteredTrajectory& fwd, const StateSpaceView& ssv,
                       const Eigen::MatrixXd& Z, double eigen_floor) {
  const int k = ssv.regimes();
  const auto steps = fwd.beliefs.size();
  if (steps == 0 || fwd.M.rows() != static_cast<Eigen::Index>(steps) || fwd.M.cols() != k) {
    throw ValidationError("sks: incomplete forward trajectory");
  }
  SmoothedTrajectory out;
  out.M.resize(static_cast<Eigen::Index>(steps), k);
  out.beliefs.resize(steps);
  out.beliefs.back() = fwd.beliefs.back();
  out.M.row(static_cast<Eigen::Index>(steps - 1)) = fwd.M.row(static_cast<Eigen::Index>(steps - 1));

  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(k));
  std::vector<Eigen::MatrixXd> covs(static_cast<std::size_t>(k));
  std::vector<double> weights(static_cast<std::size_t>(k));
  Eigen::MatrixXd joint(k, k);

  for (std::size_t tt = steps - 1; tt-- > 0;) {
    const auto t = static_cast<Eigen::Index>(tt);
    const Eigen::RowVectorXd mf = fwd.M.row(t);
    const Eigen::RowVectorXd ms_next = out.M.row(t + 1);
    const Eigen::RowVectorXd pred = mf * Z;  // P(S_{t+1}=k | y_1..t)
    for (int kk = 0; kk < k; ++kk) {
      if (ms_next(kk) == 0.0) {
        joint.col(kk).setZero();
        continue;
      }
      if (!(pred(kk) > 0.0)) {
        throw NumericalError("sks: zero predicted probability for regime " +
                             std::to_string(kk + 1) + " at t=" + std::to_string(tt));
      }
      for (int j = 0; j < k; ++j) joint(j, kk) = mf(j) * Z(j, kk) / pred(kk) * ms_next(kk);
    }
    Eigen::VectorXd ms = joint.rowwise().sum();
    const double total = ms.sum();
    if (!(total > 0.0)) throw NumericalError("sks: smoothed probabilities vanished at t=" + std::to_string(tt));
    out.M.row(t) = (ms / total).transpose();

    auto& row = out.beliefs[tt];
    row.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      const auto& filt = fwd.beliefs[tt][static_cast<std::size_t>(j)];
      if (!(ms(j) > 0.0)) {
        row[static_cast<std::size_t>(j)] = filt;
        continue;
      }
      for (int kk = 0; kk < k; ++kk) {
        const auto sk = static_cast<std::size_t>(kk);
        const double w = joint(j, kk) / ms(j);
        weights[sk] = w;
        if (w == 0.0) {
          means[sk] = filt.mean;
          covs[sk] = filt.cov;
          continue;
        }
        const auto& a = ssv.A[sk];
        const auto& next = out.beliefs[tt + 1][sk];
        const Eigen::VectorXd x_pred = a * filt.mean;
        Eigen::MatrixXd p_pred = a * filt.cov * a.transpose() + ssv.Q[sk];
        p_pred = 0.5 * (p_pred + p_pred.transpose());
        const Eigen::MatrixXd gain = smoother_gain(filt.cov, a, p_pred);
        means[sk] = filt.mean + gain * (next.mean - x_pred);
        covs[sk] = filt.cov + gain * (next.cov - p_pred) * gain.transpose();
      }
      const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
      for (double& w : weights) w /= wsum;
      auto belief = collapse(means, covs, weights);
      regularize_covariance(belief.cov, eigen_floor);
      row[static_cast<std::size_t>(j)] = std::move(belief);
    }
  }
  return out;
}

StateSequence decode_map_states(const Eigen::MatrixXd& M) {
  StateSequence out(static_cast<std::size_t>(M.rows()));
  for (Eigen::Index t = 0; t < M.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < M.cols(); ++j) {
      if (M(t, j) > M(t, best)) best = j;
    }
    out[static_cast<std::size_t>(t)] = static_cast<int>(best) + 1;
  }
  return out;
}

void write_trajectory_csv(const Eigen::MatrixXd& M, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << 't';
  for (Eigen::Index j = 0; j < M.cols(); ++j) out << ",M" << j + 1;
  out << ",map_state\n";
  out.precision(17);
  const auto states = decode_map_states(M);
  for (Eigen::Index t = 0; t < M.rows(); ++t) {
    out << t;
    for (Eigen::Index j = 0; j < M.cols(); ++j) out << ',' << M(t, j);
    out << ',' << states[static_cast<std::size_t>(t)] << '\n';
  }
}

}  // namespace hsseg
