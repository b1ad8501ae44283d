#include "hsseg/duration_viterbi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hsseg/error.hpp"
#include "hsseg/preprocess.hpp"

namespace hsseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

void HeartRateEstimate::validate() const {
  if (!(hr >= 30.0 && hr <= 200.0)) {
    throw ValidationError("heart rate " + std::to_string(hr) + " outside [30, 200] bpm");
  }
  if (!(t_sys >= 0.1 && t_sys <= 60.0 / hr)) {
    throw ValidationError("systolic interval " + std::to_string(t_sys) +
                          " s outside [0.1, 60/hr]");
  }
}

HeartRateEstimate estimate_heart_rate(std::span<const double> signal, double fs,
                                      const HeartRateOptions& opts) {
  if (static_cast<double>(signal.size()) < 5.0 * fs) {
    throw ValidationError("heart-rate estimation needs at least 5 s of signal");
  }
  std::vector<double> env(signal.size());
  std::transform(signal.begin(), signal.end(), env.begin(),
                 [](double v) { return std::abs(v); });
  env = sos_filtfilt(design_butterworth_lowpass(opts.envelope_cutoff_hz, 2, fs), env);
  const double mean = std::accumulate(env.begin(), env.end(), 0.0) / static_cast<double>(env.size());
  for (double& v : env) v -= mean;

  const auto min_lag = static_cast<std::size_t>(std::ceil(60.0 * fs / opts.max_bpm));
  const auto max_lag = std::min(static_cast<std::size_t>(std::floor(60.0 * fs / opts.min_bpm)),
                                env.size() - 2);
  // Biased autocorrelation normalised by the zero-lag energy.
  std::vector<double> r(max_lag + 2, 0.0);
  for (std::size_t lag = 0; lag < r.size(); ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < env.size(); ++i) acc += env[i] * env[i + lag];
    r[lag] = acc;
  }
  if (!(r[0] > 0.0)) throw NumericalError("heart-rate estimation: flat envelope");
  const double r0 = r[0];
  for (double& v : r) v /= r0;

  std::size_t best = 0;
  for (std::size_t lag = std::max<std::size_t>(min_lag, 1); lag <= max_lag; ++lag) {
    const bool local_max = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
    if (local_max && (best == 0 || r[lag] > r[best])) best = lag;
  }
  if (best == 0) throw NumericalError("heart-rate estimation: no autocorrelation peak in range");

  HeartRateEstimate est;
  est.hr = 60.0 * fs / static_cast<double>(best);
  est.peak = r[best];
  est.confident = r[best] >= opts.min_peak;

  const auto lo = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(best)));
  const auto hi = static_cast<std::size_t>(std::floor(0.5 * static_cast<double>(best)));
  std::size_t sys_lag = lo;
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    if (r[lag] > r[sys_lag]) sys_lag = lag;
  }
  est.t_sys = std::clamp(static_cast<double>(sys_lag) / fs, 0.1, 60.0 / est.hr);
  return est;
}

DurationStats duration_stats_from_tracks(std::span<const AnnotationTrack> tracks, double fs) {
  std::array<std::vector<double>, kNumRegimes> interior;
  std::array<std::vector<double>, kNumRegimes> all;
  for (const auto& track : tracks) {
    validate_track(track);
    const auto n = track.intervals.size();
    for (std::size_t r = 0; r < n; ++r) {
      const auto& iv = track.intervals[r];
      const double secs = static_cast<double>(iv.length()) / fs;
      all[static_cast<std::size_t>(iv.state - 1)].push_back(secs);
      if (r > 0 && r + 1 < n) interior[static_cast<std::size_t>(iv.state - 1)].push_back(secs);
    }
  }
  DurationStats stats;
  for (std::size_t j = 0; j < kNumRegimes; ++j) {
    const auto& v = interior[j].empty() ? all[j] : interior[j];
    if (v.empty()) {
      throw ValidationError("no annotated intervals for regime " + std::to_string(j + 1));
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    stats.mean_s[j] = mean;
    stats.sd_s[j] = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return stats;
}

nlohmann::json to_json(const DurationStats& stats) {
  return {{"mean_s", stats.mean_s}, {"sd_s", stats.sd_s}};
}

DurationStats duration_stats_from_json(const nlohmann::json& doc) {
  try {
    DurationStats s;
    s.mean_s = doc.at("mean_s").get<std::array<double, kNumRegimes>>();
    s.sd_s = doc.at("sd_s").get<std::array<double, kNumRegimes>>();
    return s;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("duration stats: ") + err.what());
  }
}

void DurationModel::validate() const {
  if (d_max < 1 || dP.cols() != d_max || dP.rows() < 1) {
    throw ValidationError("duration model: bad shape");
  }
  for (Eigen::Index j = 0; j < dP.rows(); ++j) {
    if ((dP.row(j).array() < 0.0).any() || std::abs(dP.row(j).sum() - 1.0) > 1e-9) {
      throw ValidationError("duration model: row " + std::to_string(j + 1) +
                            " is not a probability vector");
    }
  }
}

namespace {

Eigen::RowVectorXd discretised_gaussian(double mean, double sd, int d_max) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(d_max);
  if (sd > 0.0) {
    for (int d = 1; d <= d_max; ++d) {
      const double z = (d - mean) / sd;
      row(d - 1) = std::exp(-0.5 * z * z);
    }
    const double total = row.sum();
    if (total > 0.0 && std::isfinite(total)) return row / total;
    row.setZero();
  }
  const auto at = std::clamp(static_cast<int>(std::lround(mean)), 1, d_max);
  row(at - 1) = 1.0;
  return row;
}

}  // namespace

DurationModel build_duration_model(const HeartRateEstimate& hr, const DurationStats& stats,
                                   double fs) {
  hr.validate();
  DurationModel dm;
  dm.d_max = std::max(1, static_cast<int>(std::lround(fs * 60.0 / hr.hr)));
  std::array<double, kNumRegimes> mean{};
  std::array<double, kNumRegimes> sd{};
  for (std::size_t j = 0; j < kNumRegimes; ++j) sd[j] = stats.sd_s[j] * fs;
  mean[0] = stats.mean_s[0] * fs;
  mean[2] = stats.mean_s[2] * fs;
  mean[1] = hr.t_sys * fs - mean[0];
  mean[3] = static_cast<double>(dm.d_max) - mean[0] - mean[1] - mean[2];
  static constexpr std::array<const char*, kNumRegimes> names{"S1", "systole", "S2", "diastole"};
  for (std::size_t j = 0; j < kNumRegimes; ++j) {
    if (!(mean[j] > 0.0)) {
      throw ValidationError(std::string("infeasible duration: mean ") + names[j] +
                            " duration is " + std::to_string(mean[j]) + " samples");
    }
  }
  dm.dP.resize(kNumRegimes, dm.d_max);
  for (std::size_t j = 0; j < kNumRegimes; ++j) {
    dm.dP.row(static_cast<Eigen::Index>(j)) = discretised_gaussian(mean[j], sd[j], dm.d_max);
  }
  return dm;
}

Eigen::MatrixXd cyclic_successor_matrix(int k) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) a(i, (i + 1) % k) = 1.0;
  return a;
}

DurationViterbiResult skf_viterbi(const Eigen::MatrixXd& M, const DurationModel& dm,
                                  const Eigen::MatrixXd& a, const Eigen::VectorXd& pi0) {
  const auto T = static_cast<std::size_t>(M.rows());
  const auto K = static_cast<int>(M.cols());
  if (T == 0 || K < 1) throw ValidationError("skf_viterbi: empty probability matrix");
  dm.validate();
  if (dm.dP.rows() != K || a.rows() != K || a.cols() != K || pi0.size() != K) {
    throw ValidationError("skf_viterbi: shape mismatch between M, dP, a and pi0");
  }
  for (int i = 0; i < K; ++i) {
    if (a(i, i) != 0.0) throw ValidationError("skf_viterbi: a must forbid self transitions");
  }
  if ((M.array() < 0.0).any() || !M.allFinite()) {
    throw ValidationError("skf_viterbi: invalid state probabilities");
  }

  const auto d_max = static_cast<std::size_t>(dm.d_max);
  const std::size_t ext = T + d_max - 1;  // segment end indices 0..ext-1
  const auto Ks = static_cast<std::size_t>(K);

  std::vector<double> log_m(T * Ks);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < Ks; ++j)
      log_m[t * Ks + j] = safe_log(M(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
  std::vector<double> log_dp(Ks * d_max);
  for (std::size_t j = 0; j < Ks; ++j)
    for (std::size_t d = 0; d < d_max; ++d)
      log_dp[j * d_max + d] = safe_log(dm.dP(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)));
  Eigen::MatrixXd log_a(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) log_a(i, j) = safe_log(a(i, j));

  std::vector<double> delta(ext * Ks, kNegInf);
  std::vector<std::size_t> dur(ext * Ks, 0);
  std::vector<int> psi(ext * Ks, -1);
  // Best predecessor entering j from a segment ending at t (t <= T-2).
  std::vector<double> enter(T * Ks, kNegInf);
  std::vector<int> enter_arg(T * Ks, -1);

  for (std::size_t t = 0; t < ext; ++t) {
    for (std::size_t j = 0; j < Ks; ++j) {
      double best = kNegInf;
      std::size_t best_d = 0;
      int best_psi = -1;
      double obs = 0.0;
      for (std::size_t d = 1; d <= d_max && d <= t + 1; ++d) {
        const std::size_t start = t + 1 - d;
        if (start >= T) continue;  // segment lies wholly past the signal
        obs += log_m[start * Ks + j];
        if (obs == kNegInf) break;
        double cand;
        int pred;
        if (start == 0) {
          cand = std::log(std::max(pi0(static_cast<Eigen::Index>(j)), 0.0)) + obs;
          pred = -1;
        } else {
          cand = enter[(start - 1) * Ks + j] + log_dp[j * d_max + d - 1] + obs;
          pred = enter_arg[(start - 1) * Ks + j];
        }
        if (cand > best) {
          best = cand;
          best_d = d;
          best_psi = pred;
        }
      }
      delta[t * Ks + j] = best;
      dur[t * Ks + j] = best_d;
      psi[t * Ks + j] = best_psi;
    }
    if (t + 1 < T) {
      for (std::size_t j = 0; j < Ks; ++j) {
        double best = kNegInf;
        int arg = -1;
        for (std::size_t i = 0; i < Ks; ++i) {
          if (i == j) continue;
          const double v = delta[t * Ks + i] + log_a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (v > best) {
            best = v;
            arg = static_cast<int>(i);
          }
        }
        enter[t * Ks + j] = best;
        enter_arg[t * Ks + j] = arg;
      }
    }
  }

  double best = kNegInf;
  std::size_t t_end = 0;
  std::size_t j_end = 0;
  for (std::size_t t = T - 1; t < ext; ++t) {
    for (std::size_t j = 0; j < Ks; ++j) {
      if (delta[t * Ks + j] > best) {
        best = delta[t * Ks + j];
        t_end = t;
        j_end = j;
      }
    }
  }
  if (best == kNegInf) {
    throw NumericalError("skf_viterbi: no path with non-zero probability");
  }

  DurationViterbiResult out;
  out.log_score = best;
  out.path.assign(T, 0);
  std::size_t t = t_end;
  std::size_t j = j_end;
  while (true) {
    const std::size_t d = dur[t * Ks + j];
    const std::size_t start = t + 1 - d;
    for (std::size_t s = start; s <= std::min(t, T - 1); ++s) out.path[s] = static_cast<int>(j) + 1;
    const int pred = psi[t * Ks + j];
    if (start == 0) break;
    if (pred < 0) throw NumericalError("skf_viterbi: broken back-pointer");
    t = start - 1;
    j = static_cast<std::size_t>(pred);
  }
  return out;
}

}  // namespace hsseg
