#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>

namespace hsseg {

struct MfccConfig {
  double fs = 1000.0;
  double frame_ms = 50.0;
  double hop_ms = 10.0;
  double preemphasis = 0.97;
  int n_mel = 24;
  int n_coef = 12;
  double log_floor = 1e-10;
  int fft_size = 0;  // 0: next power of two >= max(frame length, 256)

  void validate() const;
  std::size_t frame_length() const;
  std::size_t hop_length() const;
  std::size_t nfft() const;
};

/// F x n_coef cepstra, coefficients 1..n_coef (the 0th is dropped).
struct FeatureSequence {
  Eigen::MatrixXd frames;
  std::string id;

  Eigen::Index size() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

/// F = floor((N - L) / H) + 1 frames, each pre-emphasised
/// (y[n] = x[n] - a x[n-1], with x[-1] taken as x[0]) then Hamming windowed.
Eigen::MatrixXd frame_signal(std::span<const double> signal, const MfccConfig& cfg);

/// n_mel triangular filters equally spaced on the mel scale over [0, fs/2],
/// evaluated on the nfft/2+1 DFT bin frequencies.
Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

FeatureSequence extract_mfcc(std::span<const double> signal, const MfccConfig& cfg,
                             std::string id = {});

/// Feature cache: `# segment=<id> frames=<F> fs=<fs>` then one CSV row per frame.
void write_feature_csv(const FeatureSequence& features, double fs,
                       const std::filesystem::path& path);
FeatureSequence read_feature_csv(const std::filesystem::path& path);

}  // namespace hsseg
