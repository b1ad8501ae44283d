#include "hsseg/mfcc.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "hsseg/error.hpp"
#include "text_util.hpp"

namespace hsseg {

void MfccConfig::validate() const {
  if (!(fs > 0.0)) throw ValidationError("mfcc: fs must be positive");
  if (!(frame_ms > hop_ms && hop_ms > 0.0)) {
    throw ValidationError("mfcc: need frame_ms > hop_ms > 0");
  }
  if (n_mel < 20 || n_mel > 24) throw ValidationError("mfcc: n_mel must lie in [20, 24]");
  if (n_coef < 1 || n_coef > n_mel - 1) throw ValidationError("mfcc: n_coef must be in [1, n_mel-1]");
  if (!(preemphasis >= 0.0 && preemphasis < 1.0)) {
    throw ValidationError("mfcc: preemphasis must lie in [0, 1)");
  }
  if (hop_length() < 1 || frame_length() < 2) throw ValidationError("mfcc: frame too short for fs");
  if (fft_size != 0 && static_cast<std::size_t>(fft_size) < frame_length()) {
    throw ValidationError("mfcc: fft_size smaller than the frame");
  }
}

std::size_t MfccConfig::frame_length() const {
  return static_cast<std::size_t>(std::lround(frame_ms * fs / 1000.0));
}

std::size_t MfccConfig::hop_length() const {
  return static_cast<std::size_t>(std::lround(hop_ms * fs / 1000.0));
}

std::size_t MfccConfig::nfft() const {
  if (fft_size > 0) return static_cast<std::size_t>(fft_size);
  std::size_t n = 256;
  while (n < frame_length()) n *= 2;
  return n;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd frame_signal(std::span<const double> signal, const MfccConfig& cfg) {
  cfg.validate();
  const std::size_t len = cfg.frame_length();
  const std::size_t hop = cfg.hop_length();
  if (signal.size() < len) {
    throw ValidationError("mfcc: signal of " + std::to_string(signal.size()) +
                          " samples is too short for one frame of " + std::to_string(len));
  }
  const std::size_t count = (signal.size() - len) / hop + 1;
  Eigen::MatrixXd frames(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(len));
  const double denom = static_cast<double>(len - 1);
  for (std::size_t f = 0; f < count; ++f) {
    const std::size_t off = f * hop;
    for (std::size_t n = 0; n < len; ++n) {
      const double prev = n == 0 ? signal[off] : signal[off + n - 1];
      const double emph = signal[off + n] - cfg.preemphasis * prev;
      const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(n) / denom);
      frames(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(n)) = emph * w;
    }
  }
  return frames;
}

Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg) {
  const std::size_t nfft = cfg.nfft();
  const auto bins = static_cast<Eigen::Index>(nfft / 2 + 1);
  const double top = hz_to_mel(cfg.fs / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mel + 2));
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(top * static_cast<double>(m) / static_cast<double>(cfg.n_mel + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mel, bins);
  for (int m = 0; m < cfg.n_mel; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.fs / static_cast<double>(nfft);
      if (f > lo && f <= mid) fb(m, k) = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) fb(m, k) = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

FeatureSequence extract_mfcc(std::span<const double> signal, const MfccConfig& cfg,
                             std::string id) {
  const Eigen::MatrixXd frames = frame_signal(signal, cfg);
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const std::size_t nfft = cfg.nfft();
  const auto bins = static_cast<Eigen::Index>(nfft / 2 + 1);
  const int nm = cfg.n_mel;

  // Orthonormal DCT-II rows 1..n_coef.
  Eigen::MatrixXd dct(cfg.n_coef, nm);
  for (int c = 1; c <= cfg.n_coef; ++c) {
    for (int n = 0; n < nm; ++n) {
      dct(c - 1, n) = std::sqrt(2.0 / nm) * std::cos(M_PI * c * (2.0 * n + 1.0) / (2.0 * nm));
    }
  }

  Eigen::FFT<double> fft;
  std::vector<double> buf(nfft, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(bins);

  FeatureSequence out;
  out.id = std::move(id);
  out.frames.resize(frames.rows(), cfg.n_coef);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (Eigen::Index n = 0; n < frames.cols(); ++n) buf[static_cast<std::size_t>(n)] = frames(f, n);
    fft.fwd(spec, buf);
    for (Eigen::Index k = 0; k < bins; ++k) power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    Eigen::VectorXd logmel = fb * power;
    for (Eigen::Index m = 0; m < logmel.size(); ++m) logmel(m) = std::log(std::max(logmel(m), cfg.log_floor));
    out.frames.row(f) = (dct * logmel).transpose();
  }
  return out;
}

void write_feature_csv(const FeatureSequence& features, double fs,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "# segment=" << features.id << " frames=" << features.size() << " fs=" << fs << '\n';
  out.precision(17);
  for (Eigen::Index f = 0; f < features.frames.rows(); ++f) {
    for (Eigen::Index c = 0; c < features.frames.cols(); ++c) {
      if (c) out << ',';
      out << features.frames(f, c);
    }
    out << '\n';
  }
}

FeatureSequence read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# segment=", 0) != 0) {
    throw FormatError(path.string() + ": missing feature header");
  }
  FeatureSequence out;
  long long frames = -1;
  {
    std::istringstream hdr(line.substr(2));
    std::string tok;
    while (hdr >> tok) {
      if (tok.rfind("segment=", 0) == 0) out.id = tok.substr(8);
      if (tok.rfind("frames=", 0) == 0) frames = detail::parse_int(tok.substr(7)).value_or(-1);
    }
  }
  if (frames < 1) throw FormatError(path.string() + ": bad frame count in header");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    for (auto cell : detail::split_csv(line)) {
      const auto v = detail::parse_double(cell);
      if (!v) throw FormatError(path.string() + ": non-numeric feature");
      row.push_back(*v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ": ragged feature rows");
    }
    rows.push_back(std::move(row));
  }
  if (static_cast<long long>(rows.size()) != frames) {
    throw FormatError(path.string() + ": header frame count does not match rows");
  }
  out.frames.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out.frames(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

}  // namespace hsseg
