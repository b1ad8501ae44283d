#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsseg/msar_model.hpp"
#include "hsseg/signal_io.hpp"

namespace hsseg {

struct PlannedSegment {
  int regime = 1;
  std::size_t duration = 1;  // samples
};

/// With an explicit plan the signal covers its first `length` samples
/// (length 0 means the whole plan). Without one, regimes follow a Markov
/// chain on params.Z starting in `initial_regime`. R may be zero here.
struct SynthSpec {
  MsarParams params;
  std::vector<PlannedSegment> plan;
  int initial_regime = 1;
  std::uint64_t seed = 1;
  std::size_t length = 0;

  void validate() const;
  std::size_t output_length() const;
};

struct SynthOutput {
  std::vector<double> signal;
  StateSequence states;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;  // e.g. unstable AR regimes
};

/// Runs the switching AR recursion forward from zero lags, keeping the lag
/// vector across regime switches, and adds N(0, R_j) observation noise.
SynthOutput generate_msar(const SynthSpec& spec);

/// Largest eigenvalue modulus of the AR companion matrix.
double companion_spectral_radius(std::span<const double> phi);

/// AR(2) resonance x_t = 2r cos(w) x_{t-1} - r^2 x_{t-2}, zero-padded to
/// `order` coefficients.
Eigen::VectorXd ar_resonance(double freq_hz, double radius, double fs, int order);

/// Cyclic 1 -> 2 -> ... -> K plan with Gaussian durations (samples, rounded,
/// at least 1) covering at least `total` samples.
std::vector<PlannedSegment> cyclic_duration_plan(std::span<const double> mean,
                                                 std::span<const double> sd,
                                                 std::size_t total, int first_regime,
                                                 std::uint64_t seed);

/// Four well-separated regimes at fs, used by the synthetic suites and the
/// `synth` command. Resonances sit near 80, 250, 150 and 350 Hz at 1 kHz,
/// inside the default pass band.
MsarParams demo_msar_params(double fs = 1000.0, int order = 4);
/// Demo dwell means and SDs in seconds for S1, systole, S2, diastole.
std::array<double, kNumRegimes> demo_duration_means();
std::array<double, kNumRegimes> demo_duration_sds();

}  // namespace hsseg
