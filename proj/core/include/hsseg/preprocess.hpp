#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "hsseg/signal_io.hpp"

namespace hsseg {

struct PreprocessConfig {
  double band_low = 25.0;    // Hz
  double band_high = 400.0;  // Hz
  int filter_order = 4;      // Butterworth prototype order
  double spike_window = 0.5; // seconds
  double spike_threshold = 3.0;  // multiple of the median window maximum
  bool normalize = true;

  /// Throws ValidationError when the band does not fit below fs/2.
  void validate(double fs) const;
};

/// One biquad in transposed direct form II, a[0] == 1.
struct SecondOrderSection {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

using SosFilter = std::vector<SecondOrderSection>;

/// Digital Butterworth band-pass (2*order poles) via the bilinear transform
/// with pre-warped edges. Unity gain at the band's geometric centre.
SosFilter design_butterworth_bandpass(double low_hz, double high_hz, int order,
                                      double fs);
/// Digital Butterworth low-pass with unity DC gain.
SosFilter design_butterworth_lowpass(double cutoff_hz, int order, double fs);

std::complex<double> frequency_response(const SosFilter& sos, double freq_hz,
                                        double fs);

/// Causal cascade filtering from rest.
std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x);

/// Forward-backward filtering with odd-reflection padding and steady-state
/// initial conditions; zero phase, squared magnitude response.
std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x);

std::vector<double> bandpass_filter(std::span<const double> signal, double fs,
                                    const PreprocessConfig& cfg);

/// Windowed-outlier spike removal. Non-overlapping windows of
/// `spike_window` seconds; while the largest window maximum exceeds
/// `spike_threshold` times the median window maximum, the spike around that
/// maximum (bounded by the neighbouring zero crossings, clipped to the
/// window) is replaced by a straight line between its edge samples.
std::vector<double> remove_spikes(std::span<const double> signal, double fs,
                                  const PreprocessConfig& cfg);

/// Subtract the mean, divide by the sample standard deviation (n - 1).
std::vector<double> zscore_normalize(std::span<const double> signal);

/// filter -> spike removal -> (optional) normalisation.
std::vector<double> preprocess_signal(std::span<const double> signal, double fs,
                                      const PreprocessConfig& cfg);
Recording preprocess_recording(const Recording& rec, const PreprocessConfig& cfg);

}  // namespace hsseg
