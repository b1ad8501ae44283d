#include "hsseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsseg/error.hpp"

namespace hsseg {

using cplx = std::complex<double>;

void PreprocessConfig::validate(double fs) const {
  if (!(band_low > 0.0) || !(band_low < band_high) || !(band_high < fs / 2.0)) {
    throw ValidationError("band must satisfy 0 < low < high < fs/2 (fs=" +
                          std::to_string(fs) + ")");
  }
  if (filter_order < 1) throw ValidationError("filter_order must be >= 1");
  if (!(spike_window > 0.0)) throw ValidationError("spike_window must be > 0");
  if (!(spike_threshold > 1.0)) throw ValidationError("spike_threshold must be > 1");
}

namespace {

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f, double fs) { return 2.0 * fs * std::tan(M_PI * f / fs); }

std::vector<cplx> butterworth_prototype(int order) {
  std::vector<cplx> poles;
  for (int k = 1; k <= order; ++k) {
    const double theta = M_PI * (2.0 * k + order - 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

// Pairs digital poles into denominators: conjugate pairs first, then real
// poles two at a time (a leftover real pole yields a first-order section).
std::vector<std::array<double, 3>> pair_poles(const std::vector<cplx>& poles) {
  std::vector<std::array<double, 3>> dens;
  std::vector<double> reals;
  for (const auto& z : poles) {
    if (std::abs(z.imag()) <= 1e-12 * std::max(1.0, std::abs(z))) {
      reals.push_back(z.real());
    } else if (z.imag() > 0.0) {
      dens.push_back({1.0, -2.0 * z.real(), std::norm(z)});
    }
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    dens.push_back({1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (reals.size() % 2 == 1) dens.push_back({1.0, -reals.back(), 0.0});
  return dens;
}

void normalise_gain(SosFilter& sos, double ref_hz, double fs) {
  const double g = std::abs(frequency_response(sos, ref_hz, fs));
  if (!(g > 0.0)) throw NumericalError("filter design: zero gain at reference");
  for (double& b : sos.front().b) b /= g;
}

}  // namespace

SosFilter design_butterworth_bandpass(double low_hz, double high_hz, int order,
                                      double fs) {
  if (order < 1 || !(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw ValidationError("invalid band-pass design parameters");
  }
  const double wl = prewarp(low_hz, fs);
  const double wh = prewarp(high_hz, fs);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);

  std::vector<cplx> digital;
  for (const auto& p : butterworth_prototype(order)) {
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0 * w0);
    digital.push_back(bilinear(half + root, fs));
    digital.push_back(bilinear(half - root, fs));
  }
  SosFilter sos;
  for (const auto& den : pair_poles(digital)) {
    SecondOrderSection s;
    s.a = den;
    // Zeros at z = 1 (from s = 0) and z = -1 (from s = inf).
    s.b = {1.0, 0.0, -1.0};
    sos.push_back(s);
  }
  const double centre = fs / M_PI * std::atan(w0 / (2.0 * fs));
  normalise_gain(sos, centre, fs);
  return sos;
}

SosFilter design_butterworth_lowpass(double cutoff_hz, int order, double fs) {
  if (order < 1 || !(0.0 < cutoff_hz && cutoff_hz < fs / 2.0)) {
    throw ValidationError("invalid low-pass design parameters");
  }
  const double wc = prewarp(cutoff_hz, fs);
  std::vector<cplx> digital;
  for (const auto& p : butterworth_prototype(order)) {
    digital.push_back(bilinear(wc * p, fs));
  }
  SosFilter sos;
  for (const auto& den : pair_poles(digital)) {
    SecondOrderSection s;
    s.a = den;
    s.b = den[2] == 0.0 ? std::array<double, 3>{1.0, 1.0, 0.0}
                        : std::array<double, 3>{1.0, 2.0, 1.0};
    sos.push_back(s);
  }
  normalise_gain(sos, 0.0, fs);
  return sos;
}

std::complex<double> frequency_response(const SosFilter& sos, double freq_hz,
                                        double fs) {
  const cplx zinv = std::polar(1.0, -2.0 * M_PI * freq_hz / fs);
  cplx h = 1.0;
  for (const auto& s : sos) {
    const cplx num = s.b[0] + zinv * (s.b[1] + zinv * s.b[2]);
    const cplx den = s.a[0] + zinv * (s.a[1] + zinv * s.a[2]);
    h *= num / den;
  }
  return h;
}

namespace {

void run_sections(const SosFilter& sos, std::vector<double>& x,
                  std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& [b, a] = sos[k];
    auto [z1, z2] = state[k];
    for (double& v : x) {
      const double in = v;
      const double y = b[0] * in + z1;
      z1 = b[1] * in - a[1] * y + z2;
      z2 = b[2] * in - a[2] * y;
      v = y;
    }
  }
}

// Per-section steady-state response to a unit step, scaled by the DC gain of
// the preceding sections.
std::vector<std::array<double, 2>> step_initial_state(const SosFilter& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& [b, a] = sos[k];
    const double b1 = b[1] - a[1] * b[0];
    const double b2 = b[2] - a[2] * b[0];
    const double z1 = (b1 + b2) / (1.0 + a[1] + a[2]);
    const double z2 = b2 - a[2] * z1;
    zi[k] = {scale * z1, scale * z2};
    scale *= (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]);
  }
  return zi;
}

}  // namespace

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sections(sos, y, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t pad = 3 * (2 * sos.size() + 1);
  pad = std::min(pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_initial_state(sos);
  auto scaled = [&](double x0) {
    auto s = zi;
    for (auto& z : s) {
      z[0] *= x0;
      z[1] *= x0;
    }
    return s;
  };
  run_sections(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> bandpass_filter(std::span<const double> signal, double fs,
                                    const PreprocessConfig& cfg) {
  cfg.validate(fs);
  const auto sos =
      design_butterworth_bandpass(cfg.band_low, cfg.band_high, cfg.filter_order, fs);
  return sos_filtfilt(sos, signal);
}

namespace {

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> remove_spikes(std::span<const double> signal, double fs,
                                  const PreprocessConfig& cfg) {
  std::vector<double> out(signal.begin(), signal.end());
  const auto win = static_cast<std::size_t>(std::lround(cfg.spike_window * fs));
  if (win < 3 || out.size() < 2 * win) return out;

  const std::size_t full = out.size() / win;
  const std::size_t n_windows = full + (out.size() % win != 0 ? 1 : 0);
  auto window_max = [&](std::size_t w) {
    const std::size_t lo = w * win;
    const std::size_t hi = std::min(out.size(), lo + win);
    double m = 0.0;
    for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(out[i]));
    return m;
  };

  // Every pass strictly lowers one window maximum; the bound only guards
  // against pathological floating-point input.
  const std::size_t max_passes = 64 * out.size();
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    std::vector<double> maa(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) maa[w] = window_max(w);
    const double med = median_of({maa.begin(), maa.begin() + static_cast<std::ptrdiff_t>(full)});
    if (!(med > 0.0)) break;
    const auto worst = static_cast<std::size_t>(
        std::max_element(maa.begin(), maa.end()) - maa.begin());
    if (!(maa[worst] > cfg.spike_threshold * med)) break;

    const std::size_t lo = worst * win;
    const std::size_t hi = std::min(out.size(), lo + win);
    std::size_t peak = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (std::abs(out[i]) > std::abs(out[peak])) peak = i;
    }
    // Spike extent: back to the last sign change before the peak and forward
    // to the first one after it, bounded by the window.
    std::size_t first = peak;
    while (first > lo && out[first - 1] * out[peak] > 0.0) --first;
    std::size_t last = peak;
    while (last + 1 < hi && out[last + 1] * out[peak] > 0.0) ++last;

    const double left = first > 0 ? out[first - 1] : 0.0;
    const double right = last + 1 < out.size() ? out[last + 1] : 0.0;
    const double span = static_cast<double>(last - first + 2);
    for (std::size_t i = first; i <= last; ++i) {
      const double frac = static_cast<double>(i - first + 1) / span;
      out[i] = left + frac * (right - left);
    }
  }
  return out;
}

std::vector<double> zscore_normalize(std::span<const double> signal) {
  if (signal.size() < 2) throw ValidationError("normalisation needs at least 2 samples");
  const double n = static_cast<double>(signal.size());
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : signal) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || sd < 1e-300) throw ValidationError("zero variance signal");
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) / sd;
  return out;
}

std::vector<double> preprocess_signal(std::span<const double> signal, double fs,
                                      const PreprocessConfig& cfg) {
  auto y = bandpass_filter(signal, fs, cfg);
  y = remove_spikes(y, fs, cfg);
  if (cfg.normalize) y = zscore_normalize(y);
  return y;
}

Recording preprocess_recording(const Recording& rec, const PreprocessConfig& cfg) {
  validate_recording(rec);
  Recording out;
  out.id = rec.id;
  out.sample_rate = rec.sample_rate;
  out.samples = preprocess_signal(rec.samples, rec.sample_rate, cfg);
  return out;
}

}  // namespace hsseg
