#include "hsseg/msar_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hsseg/error.hpp"

namespace hsseg {

namespace {

constexpr int kSchemaVersion = 1;

}  // namespace

Eigen::MatrixXd cyclic_mask(int k) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    m(i, i) = 1.0;
    m(i, (i + 1) % k) = 1.0;
  }
  return m;
}

void MsarParams::validate() const {
  if (K < 1 || P < 1) throw ValidationError("MsarParams: K and P must be positive");
  if (phi.rows() != K || phi.cols() != P || q.size() != K || R.size() != K ||
      Z.rows() != K || Z.cols() != K) {
    throw ValidationError("MsarParams: inconsistent shapes");
  }
  if (!phi.allFinite()) throw ValidationError("MsarParams: non-finite phi");
  const Eigen::MatrixXd mask = cyclic_mask(K);
  for (int i = 0; i < K; ++i) {
    if (!(q(i) >= 0.0) || !std::isfinite(q(i))) {
      throw ValidationError("MsarParams: q must be >= 0");
    }
    if (!(R(i) > 0.0) || !std::isfinite(R(i))) {
      throw ValidationError("MsarParams: R must be > 0");
    }
    double sum = 0.0;
    for (int j = 0; j < K; ++j) {
      if (!(Z(i, j) >= 0.0)) throw ValidationError("MsarParams: negative transition");
      if (mask(i, j) == 0.0 && Z(i, j) != 0.0) {
        throw ValidationError("MsarParams: transition " + std::to_string(i + 1) +
                              "->" + std::to_string(j + 1) +
                              " violates the cyclic topology");
      }
      sum += Z(i, j);
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw ValidationError("MsarParams: row " + std::to_string(i + 1) +
                            " of Z does not sum to 1");
    }
  }
}

StateSpaceView to_state_space(const MsarParams& params) {
  params.validate();
  StateSpaceView v;
  const int p = params.P;
  v.C = Eigen::RowVectorXd::Zero(p);
  v.C(0) = 1.0;
  v.R = params.R;
  for (int j = 0; j < params.K; ++j) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    a.row(0) = params.phi.row(j);
    for (int r = 1; r < p; ++r) a(r, r - 1) = 1.0;
    v.A.push_back(std::move(a));
    Eigen::MatrixXd qm = Eigen::MatrixXd::Zero(p, p);
    qm(0, 0) = params.q(j);
    v.Q.push_back(std::move(qm));
  }
  return v;
}

std::size_t ClusteredSeries::total() const {
  std::size_t n = 0;
  for (const auto& s : series) n += s.size();
  return n;
}

ClusteredSeries dynamic_cluster(const Recording& rec, const AnnotationTrack& track,
                                int k) {
  validate_track(track);
  if (track.end_sample() > rec.samples.size()) {
    throw ValidationError("annotation of '" + rec.id + "' ends at sample " +
                          std::to_string(track.end_sample()) +
                          " beyond the recording length " +
                          std::to_string(rec.samples.size()));
  }
  ClusteredSeries out;
  out.series.resize(static_cast<std::size_t>(k));
  for (const auto& iv : track.intervals) {
    if (iv.state > k) throw ValidationError("annotation state exceeds regime count");
    auto& dst = out.series[static_cast<std::size_t>(iv.state - 1)];
    dst.insert(dst.end(), rec.samples.begin() + static_cast<std::ptrdiff_t>(iv.start),
               rec.samples.begin() + static_cast<std::ptrdiff_t>(iv.end));
  }
  return out;
}

ArFit fit_ar_least_squares(std::span<const double> series, int order) {
  if (order < 1) throw ValidationError("AR order must be >= 1");
  const auto n = static_cast<Eigen::Index>(series.size());
  if (n <= 10 * order) {
    throw ValidationError("AR(" + std::to_string(order) + ") fit needs more than " +
                          std::to_string(10 * order) + " samples, got " +
                          std::to_string(n));
  }
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  if (!(var > 0.0)) throw ValidationError("AR fit on a zero-variance series");

  const Eigen::Index rows = n - order;
  Eigen::MatrixXd x(rows, order);
  Eigen::VectorXd y(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const Eigen::Index now = t + order;
    y(t) = series[static_cast<std::size_t>(now)];
    for (int p = 0; p < order; ++p) x(t, p) = series[static_cast<std::size_t>(now - 1 - p)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < order) {
    throw NumericalError("AR(" + std::to_string(order) +
                         ") normal equations are rank deficient");
  }
  ArFit fit;
  fit.phi = qr.solve(y);
  fit.q = (y - x * fit.phi).squaredNorm() / static_cast<double>(n);
  return fit;
}

ArFit fit_ar_regime(std::span<const double> signal, const AnnotationTrack& track,
                    int state, int order) {
  if (order < 1) throw ValidationError("AR order must be >= 1");
  if (track.end_sample() > signal.size()) {
    throw ValidationError("annotation ends beyond the signal");
  }
  std::vector<std::size_t> times;
  std::size_t members = 0;
  for (const auto& iv : track.intervals) {
    if (iv.state != state) continue;
    members += iv.length();
    for (std::size_t t = std::max<std::size_t>(iv.start, static_cast<std::size_t>(order)); t < iv.end; ++t) {
      times.push_back(t);
    }
  }
  const auto rows = static_cast<Eigen::Index>(times.size());
  if (rows <= 10 * order) {
    throw ValidationError("AR(" + std::to_string(order) + ") fit needs more than " +
                          std::to_string(10 * order) + " samples, got " + std::to_string(rows));
  }
  Eigen::MatrixXd x(rows, order);
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t t = times[static_cast<std::size_t>(r)];
    y(r) = signal[t];
    for (int p = 0; p < order; ++p) x(r, p) = signal[t - 1 - static_cast<std::size_t>(p)];
  }
  if (!((y.array() - y.mean()).square().sum() > 0.0)) throw ValidationError("AR fit on a zero-variance series");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < order) {
    throw NumericalError("AR(" + std::to_string(order) + ") normal equations are rank deficient");
  }
  ArFit fit;
  fit.phi = qr.solve(y);
  fit.q = (y - x * fit.phi).squaredNorm() / static_cast<double>(members);
  return fit;
}

double estimate_obs_noise(std::span<const double> signal, int order,
                          std::size_t window) {
  if (window <= static_cast<std::size_t>(10 * order)) {
    throw ValidationError("noise window must exceed 10*order samples");
  }
  if (signal.size() < window) {
    throw ValidationError("signal shorter than one noise-estimation window");
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t start = 0; start + window <= signal.size(); start += window) {
    try {
      sum += fit_ar_least_squares(signal.subspan(start, window), order).q;
      ++used;
    } catch (const Error&) {
      // Flat or rank-deficient window: no residual to measure.
    }
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

Eigen::MatrixXd init_transition_matrix(std::span<const AnnotationTrack> tracks, int k) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, k);
  for (const auto& track : tracks) {
    validate_track(track);
    for (const auto& iv : track.intervals) {
      const int i = iv.state - 1;
      if (i >= k) throw ValidationError("annotation state exceeds regime count");
      counts(i, i) += static_cast<double>(iv.length() - 1);
      counts(i, (i + 1) % k) += 1.0;
    }
  }
  const Eigen::MatrixXd mask = cyclic_mask(k);
  Eigen::MatrixXd z = counts.cwiseProduct(mask);
  for (int i = 0; i < k; ++i) {
    const double row = z.row(i).sum();
    if (!(row > 0.0)) {
      throw ValidationError("regime " + std::to_string(i + 1) +
                            " is absent from every annotation track");
    }
    z.row(i) /= row;
  }
  return z;
}

MsarParams pool_parameters(std::span<const MsarParams> per_recording,
                           std::span<const double> weights) {
  if (per_recording.empty()) throw ValidationError("pool_parameters: empty list");
  if (!weights.empty() && weights.size() != per_recording.size()) {
    throw ValidationError("pool_parameters: weight count mismatch");
  }
  const auto& first = per_recording.front();
  double wsum = 0.0;
  for (std::size_t r = 0; r < per_recording.size(); ++r) {
    const auto& p = per_recording[r];
    if (p.K != first.K || p.P != first.P) {
      throw ValidationError("pool_parameters: mismatched shapes (K=" +
                            std::to_string(p.K) + ", P=" + std::to_string(p.P) +
                            " vs K=" + std::to_string(first.K) +
                            ", P=" + std::to_string(first.P) + ")");
    }
    const double w = weights.empty() ? 1.0 : weights[r];
    if (!(w >= 0.0)) throw ValidationError("pool_parameters: negative weight");
    wsum += w;
  }
  if (!(wsum > 0.0)) throw ValidationError("pool_parameters: weights sum to zero");

  MsarParams out;
  out.K = first.K;
  out.P = first.P;
  out.phi = Eigen::MatrixXd::Zero(first.K, first.P);
  out.q = Eigen::VectorXd::Zero(first.K);
  out.R = Eigen::VectorXd::Zero(first.K);
  out.Z = Eigen::MatrixXd::Zero(first.K, first.K);
  for (std::size_t r = 0; r < per_recording.size(); ++r) {
    const double w = (weights.empty() ? 1.0 : weights[r]) / wsum;
    out.phi += w * per_recording[r].phi;
    out.q += w * per_recording[r].q;
    out.R += w * per_recording[r].R;
    out.Z += w * per_recording[r].Z;
  }
  if (per_recording.size() == 1) return per_recording.front();
  for (int i = 0; i < out.K; ++i) out.Z.row(i) /= out.Z.row(i).sum();
  return out;
}

namespace {

void fit_regimes(const Recording& rec, const AnnotationTrack& track, const ClusteredSeries& clusters,
                 bool boundary_lags, const MsarParams* previous, MsarParams& out) {
  for (int j = 0; j < out.K; ++j) {
    const auto& s = clusters.series[static_cast<std::size_t>(j)];
    try {
      const ArFit fit = boundary_lags ? fit_ar_regime(rec.samples, track, j + 1, out.P)
                                      : fit_ar_least_squares(s, out.P);
      out.phi.row(j) = fit.phi.transpose();
      out.q(j) = fit.q;
    } catch (const Error& err) {
      if (previous == nullptr) {
        throw ValidationError("regime " + std::to_string(j + 1) + ": " + err.what());
      }
      out.phi.row(j) = previous->phi.row(j);
      out.q(j) = previous->q(j);
    }
  }
}

}  // namespace

MsarParams fit_msar(const Recording& rec, const AnnotationTrack& track,
                    const MsarFitOptions& opts) {
  const auto clusters = dynamic_cluster(rec, track);
  MsarParams out;
  out.K = kNumRegimes;
  out.P = opts.order;
  out.phi = Eigen::MatrixXd::Zero(out.K, out.P);
  out.q = Eigen::VectorXd::Zero(out.K);
  out.R = Eigen::VectorXd::Zero(out.K);
  fit_regimes(rec, track, clusters, opts.boundary_lags, nullptr, out);

  const auto window = static_cast<std::size_t>(
      std::lround(opts.noise_window_seconds * rec.sample_rate));
  const double floor = 1e-12;
  if (opts.shared_obs_noise) {
    const std::size_t w = std::min(window, rec.samples.size());
    out.R.setConstant(std::max(floor, estimate_obs_noise(rec.samples, out.P, w)));
  } else {
    for (int j = 0; j < out.K; ++j) {
      const auto& s = clusters.series[static_cast<std::size_t>(j)];
      const std::size_t w = std::min(window, s.size());
      out.R(j) = std::max(floor, estimate_obs_noise(s, out.P, w));
    }
  }
  const AnnotationTrack tracks[] = {track};
  out.Z = init_transition_matrix(tracks, out.K);
  out.validate();
  return out;
}

MsarParams refit_msar(const Recording& rec, const AnnotationTrack& track,
                      const MsarParams& previous, const MsarFitOptions& opts) {
  const auto clusters = dynamic_cluster(rec, track, previous.K);
  MsarParams out = previous;
  fit_regimes(rec, track, clusters, opts.boundary_lags, &previous, out);
  const AnnotationTrack tracks[] = {track};
  try {
    out.Z = init_transition_matrix(tracks, out.K);
  } catch (const ValidationError&) {
    out.Z = previous.Z;
  }
  out.validate();
  return out;
}

nlohmann::json to_json(const MsarParams& params) {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["K"] = params.K;
  doc["P"] = params.P;
  auto rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
    }
    return out;
  };
  doc["phi"] = rows(params.phi);
  doc["q"] = std::vector<double>(params.q.begin(), params.q.end());
  doc["R"] = std::vector<double>(params.R.begin(), params.R.end());
  doc["Z"] = rows(params.Z);
  return doc;
}

MsarParams msar_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != kSchemaVersion) {
      throw FormatError("unsupported MSAR model schema_version");
    }
    MsarParams p;
    p.K = doc.at("K").get<int>();
    p.P = doc.at("P").get<int>();
    auto matrix = [](const nlohmann::json& j, int rows, int cols) {
      Eigen::MatrixXd m(rows, cols);
      if (static_cast<int>(j.size()) != rows) throw FormatError("matrix row count");
      for (int r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<int>(row.size()) != cols) throw FormatError("matrix column count");
        for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
      }
      return m;
    };
    auto vector = [](const nlohmann::json& j, int n) {
      if (static_cast<int>(j.size()) != n) throw FormatError("vector length");
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
      return v;
    };
    p.phi = matrix(doc.at("phi"), p.K, p.P);
    p.q = vector(doc.at("q"), p.K);
    p.R = vector(doc.at("R"), p.K);
    p.Z = matrix(doc.at("Z"), p.K, p.K);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("MSAR model: ") + err.what());
  }
}

}  // namespace hsseg
