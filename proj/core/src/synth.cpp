#include "hsseg/synth.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "hsseg/error.hpp"

namespace hsseg {

void SynthSpec::validate() const {
  // A noiseless observation channel (R = 0) is fine for generation even
  // though inference needs R > 0.
  MsarParams check = params;
  for (Eigen::Index j = 0; j < check.R.size(); ++j) {
    if (check.R(j) < 0.0) throw ValidationError("synth: R must be >= 0");
    if (check.R(j) == 0.0) check.R(j) = 1.0;
  }
  check.validate();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].duration < 1) throw ValidationError("synth: plan item " + std::to_string(i + 1) + " has zero duration");
    if (plan[i].regime < 1 || plan[i].regime > params.K) {
      throw ValidationError("synth: plan item " + std::to_string(i + 1) + " has regime outside 1.." +
                            std::to_string(params.K));
    }
  }
  if (plan.empty()) {
    if (length == 0) throw ValidationError("synth: stochastic plan needs a positive length");
    if (initial_regime < 1 || initial_regime > params.K) throw ValidationError("synth: bad initial regime");
  } else {
    std::size_t total = 0;
    for (const auto& p : plan) total += p.duration;
    if (length > total) {
      throw ValidationError("synth: plan covers " + std::to_string(total) + " samples, fewer than length " +
                            std::to_string(length));
    }
  }
}

std::size_t SynthSpec::output_length() const {
  if (length > 0 || plan.empty()) return length;
  std::size_t total = 0;
  for (const auto& p : plan) total += p.duration;
  return total;
}

double companion_spectral_radius(std::span<const double> phi) {
  const auto p = static_cast<Eigen::Index>(phi.size());
  if (p == 0) return 0.0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) a(0, i) = phi[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 1; i < p; ++i) a(i, i - 1) = 1.0;
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

SynthOutput generate_msar(const SynthSpec& spec) {
  spec.validate();
  const auto& prm = spec.params;
  const std::size_t n = spec.output_length();
  SynthOutput out;
  out.seed = spec.seed;
  out.states.reserve(n);

  std::mt19937_64 rng(spec.seed);
  if (spec.plan.empty()) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int s = spec.initial_regime;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) {
        const double r = u(rng);
        double acc = 0.0;
        int next = s;
        for (int j = 0; j < prm.K; ++j) {
          acc += prm.Z(s - 1, j);
          if (r < acc) {
            next = j + 1;
            break;
          }
        }
        s = next;
      }
      out.states.push_back(s);
    }
  } else {
    for (const auto& seg : spec.plan) {
      for (std::size_t d = 0; d < seg.duration && out.states.size() < n; ++d) out.states.push_back(seg.regime);
    }
  }

  for (int j = 0; j < prm.K; ++j) {
    const Eigen::VectorXd row = prm.phi.row(j).transpose();
    const double rho = companion_spectral_radius(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    if (rho >= 1.0) {
      out.warnings.push_back("regime " + std::to_string(j + 1) + " is unstable (spectral radius " +
                             std::to_string(rho) + ")");
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lags(static_cast<std::size_t>(prm.P), 0.0);  // lags[p] = x_{t-1-p}
  out.signal.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const int j = out.states[t] - 1;
    double x = 0.0;
    for (int p = 0; p < prm.P; ++p) x += prm.phi(j, p) * lags[static_cast<std::size_t>(p)];
    const double eta = normal(rng);
    const double eps = normal(rng);
    x += std::sqrt(prm.q(j)) * eta;
    for (std::size_t p = lags.size(); p-- > 1;) lags[p] = lags[p - 1];
    if (!lags.empty()) lags[0] = x;
    out.signal[t] = x + std::sqrt(prm.R(j)) * eps;
  }
  return out;
}

Eigen::VectorXd ar_resonance(double freq_hz, double radius, double fs, int order) {
  if (order < 2) throw ValidationError("ar_resonance: order must be at least 2");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(order);
  phi(0) = 2.0 * radius * std::cos(2.0 * M_PI * freq_hz / fs);
  phi(1) = -radius * radius;
  return phi;
}

std::vector<PlannedSegment> cyclic_duration_plan(std::span<const double> mean, std::span<const double> sd,
                                                 std::size_t total, int first_regime, std::uint64_t seed) {
  const auto k = static_cast<int>(mean.size());
  if (k < 1 || sd.size() != mean.size()) throw ValidationError("duration plan: mean/sd size mismatch");
  if (first_regime < 1 || first_regime > k) throw ValidationError("duration plan: bad first regime");
  for (double m : mean) {
    if (!(m >= 1.0)) throw ValidationError("duration plan: mean durations must be at least one sample");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PlannedSegment> plan;
  std::size_t covered = 0;
  int s = first_regime;
  while (covered < total) {
    const auto i = static_cast<std::size_t>(s - 1);
    const double d = std::round(mean[i] + sd[i] * normal(rng));
    const auto dur = static_cast<std::size_t>(std::max(1.0, d));
    plan.push_back({s, dur});
    covered += dur;
    s = next_regime(s, k);
  }
  return plan;
}

std::array<double, kNumRegimes> demo_duration_means() { return {0.12, 0.20, 0.10, 0.40}; }
std::array<double, kNumRegimes> demo_duration_sds() { return {0.01, 0.015, 0.01, 0.03}; }

MsarParams demo_msar_params(double fs, int order) {
  struct Reg {
    double freq_frac;  // of fs
    double radius;
    double q;
  };
  static constexpr Reg regs[kNumRegimes] = {
      {0.08, 0.97, 0.5}, {0.25, 0.8, 0.05}, {0.15, 0.97, 0.5}, {0.35, 0.8, 0.05}};
  MsarParams p;
  p.K = kNumRegimes;
  p.P = order;
  p.phi.resize(p.K, order);
  p.q.resize(p.K);
  p.R = Eigen::VectorXd::Constant(p.K, 1e-3);
  p.Z = Eigen::MatrixXd::Zero(p.K, p.K);
  const auto means = demo_duration_means();
  for (int j = 0; j < p.K; ++j) {
    p.phi.row(j) = ar_resonance(regs[j].freq_frac * fs, regs[j].radius, fs, order).transpose();
    p.q(j) = regs[j].q;
    const double stay = 1.0 - 1.0 / (means[static_cast<std::size_t>(j)] * fs);
    p.Z(j, j) = stay;
    p.Z(j, (j + 1) % p.K) = 1.0 - stay;
  }
  return p;
}

}  // namespace hsseg
