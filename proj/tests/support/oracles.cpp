#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace hsseg::testing {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

KalmanReference reference_kalman_filter(std::span<const double> y, const Eigen::MatrixXd& A,
                                        const Eigen::RowVectorXd& C, const Eigen::MatrixXd& Q,
                                        double R, const Eigen::VectorXd& x0,
                                        const Eigen::MatrixXd& P0) {
  const auto n = A.rows();
  KalmanReference out;
  Eigen::VectorXd x = x0;
  Eigen::MatrixXd P = P0;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (double obs : y) {
    const Eigen::VectorXd xp = A * x;
    const Eigen::MatrixXd Pp = A * P * A.transpose() + Q;
    const double S = (C * Pp * C.transpose())(0, 0) + R;
    const Eigen::VectorXd K = Pp * C.transpose() / S;
    const double e = obs - (C * xp)(0, 0);
    x = xp + K * e;
    P = (I - K * C) * Pp;
    out.loglik += -0.5 * std::log(2.0 * M_PI * S) - 0.5 * e * e / S;
    out.mean.push_back(x);
    out.cov.push_back(P);
  }
  return out;
}

KalmanReference reference_rts_smoother(const KalmanReference& filtered, const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& Q) {
  KalmanReference out = filtered;
  const std::size_t T = filtered.mean.size();
  for (std::size_t t = T - 1; t-- > 0;) {
    const Eigen::MatrixXd Pp = A * filtered.cov[t] * A.transpose() + Q;
    const Eigen::MatrixXd J = filtered.cov[t] * A.transpose() * Pp.inverse();
    out.mean[t] = filtered.mean[t] + J * (out.mean[t + 1] - A * filtered.mean[t]);
    out.cov[t] = filtered.cov[t] + J * (out.cov[t + 1] - Pp) * J.transpose();
  }
  return out;
}

SegmentationOptimum brute_force_duration_viterbi(const Eigen::MatrixXd& M,
                                                 const DurationModel& dm,
                                                 const Eigen::MatrixXd& a,
                                                 const Eigen::VectorXd& pi0, double tie_tol) {
  const int T = static_cast<int>(M.rows());
  const int K = static_cast<int>(M.cols());
  const int dmax = dm.d_max;
  std::map<StateSequence, double> scores;
  StateSequence path(static_cast<std::size_t>(T), 0);

  auto observe = [&](int state, int from, int to) {
    double s = 0.0;
    for (int t = from; t < std::min(to, T); ++t) s += log_or_neg_inf(M(t, state));
    return s;
  };
  auto record = [&](double score) {
    auto [it, inserted] = scores.emplace(path, score);
    if (!inserted) it->second = std::max(it->second, score);
  };

  std::function<void(int, int, double)> extend = [&](int prev, int pos, double score) {
    for (int j = 0; j < K; ++j) {
      if (j == prev || !(a(prev, j) > 0.0)) continue;
      for (int d = 1; d <= dmax; ++d) {
        const double s = score + std::log(a(prev, j)) + log_or_neg_inf(dm.dP(j, d - 1)) +
                         observe(j, pos, pos + d);
        for (int t = pos; t < std::min(pos + d, T); ++t) path[static_cast<std::size_t>(t)] = j + 1;
        if (pos + d >= T) record(s);
        else extend(j, pos + d, s);
      }
    }
  };

  for (int s1 = 0; s1 < K; ++s1) {
    if (!(pi0(s1) > 0.0)) continue;
    for (int d = 1; d <= dmax; ++d) {
      const double s = std::log(pi0(s1)) + observe(s1, 0, d);
      for (int t = 0; t < std::min(d, T); ++t) path[static_cast<std::size_t>(t)] = s1 + 1;
      if (d >= T) record(s);
      else extend(s1, d, s);
    }
  }

  SegmentationOptimum out;
  out.best = kNegInf;
  for (const auto& [p, s] : scores) {
    if (s > out.best) {
      out.best = s;
      out.path = p;
    }
  }
  for (const auto& [p, s] : scores) {
    if (p != out.path && s >= out.best - tie_tol) out.unique = false;
  }
  return out;
}

double reference_mixture_logpdf(const GaussianMixture& g, const Eigen::RowVectorXd& x) {
  double total = 0.0;
  for (int m = 0; m < g.components(); ++m) {
    double density = g.weights(m);
    for (int d = 0; d < x.size(); ++d) {
      const double v = g.vars(m, d);
      const double diff = x(d) - g.means(m, d);
      density *= std::exp(-0.5 * diff * diff / v) / std::sqrt(2.0 * M_PI * v);
    }
    total += density;
  }
  return std::log(total);
}

HmmEnumeration brute_force_hmm(const HmmParams& model, const Eigen::MatrixXd& obs) {
  const int K = model.num_states();
  const int T = static_cast<int>(obs.rows());
  Eigen::MatrixXd b(T, K);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < K; ++j)
      b(t, j) = reference_mixture_logpdf(model.states[static_cast<std::size_t>(j)], obs.row(t));

  HmmEnumeration out;
  out.best = kNegInf;
  std::vector<double> terms;
  std::vector<int> q(static_cast<std::size_t>(T), 0);
  long long total = 1;
  for (int t = 0; t < T; ++t) total *= K;
  for (long long code = 0; code < total; ++code) {
    long long c = code;
    for (int t = 0; t < T; ++t) {
      q[static_cast<std::size_t>(t)] = static_cast<int>(c % K);
      c /= K;
    }
    if (q.back() != K - 1) continue;
    double s = log_or_neg_inf(model.pi(q[0])) + b(0, q[0]);
    for (int t = 1; t < T; ++t) {
      s += log_or_neg_inf(model.A(q[static_cast<std::size_t>(t - 1)], q[static_cast<std::size_t>(t)])) +
           b(t, q[static_cast<std::size_t>(t)]);
    }
    if (s == kNegInf) continue;
    terms.push_back(s);
    if (s > out.best) {
      out.best = s;
      out.path.assign(q.begin(), q.end());
      for (int& v : out.path) v += 1;
    }
  }
  if (terms.empty()) {
    out.forward = kNegInf;
    return out;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double s : terms) acc += std::exp(s - m);
  out.forward = m + std::log(acc);
  return out;
}

Eigen::VectorXd random_probability_vector(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v / v.sum();
}

HmmParams random_hmm(int states, int mixtures, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> stay(0.3, 0.9);
  std::uniform_real_distribution<double> var(0.3, 2.0);
  std::normal_distribution<double> gauss(0.0, 2.0);
  HmmParams h;
  h.pi = random_probability_vector(states, rng);
  h.A = Eigen::MatrixXd::Zero(states, states);
  for (int i = 0; i + 1 < states; ++i) {
    h.A(i, i) = stay(rng);
    h.A(i, i + 1) = 1.0 - h.A(i, i);
  }
  h.A(states - 1, states - 1) = 1.0;
  for (int j = 0; j < states; ++j) {
    GaussianMixture g;
    g.weights = random_probability_vector(mixtures, rng);
    g.means.resize(mixtures, dim);
    g.vars.resize(mixtures, dim);
    for (int m = 0; m < mixtures; ++m) {
      for (int d = 0; d < dim; ++d) {
        g.means(m, d) = gauss(rng);
        g.vars(m, d) = var(rng);
      }
    }
    h.states.push_back(std::move(g));
  }
  return h;
}

namespace {

int draw(const Eigen::VectorXd& p, double r) {
  int i = 0;
  while (i + 1 < p.size() && r > p(i)) r -= p(i++);
  return i;
}

}  // namespace

Eigen::MatrixXd sample_hmm_chain(const HmmParams& model, int frames, std::mt19937_64& rng) {
  const int K = model.num_states();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<int> q(static_cast<std::size_t>(frames));
  do {
    q[0] = draw(model.pi, u01(rng));
    for (int t = 1; t < frames; ++t) {
      const Eigen::VectorXd row = model.A.row(q[static_cast<std::size_t>(t - 1)]).transpose();
      q[static_cast<std::size_t>(t)] = draw(row, u01(rng));
    }
  } while (q.back() != K - 1);
  Eigen::MatrixXd obs(frames, model.dim());
  for (int t = 0; t < frames; ++t) {
    const auto& g = model.states[static_cast<std::size_t>(q[static_cast<std::size_t>(t)])];
    const int m = draw(g.weights, u01(rng));
    for (int d = 0; d < model.dim(); ++d) obs(t, d) = g.means(m, d) + std::sqrt(g.vars(m, d)) * n01(rng);
  }
  return obs;
}

Eigen::MatrixXd sample_hmm(const HmmParams& model, int frames, std::mt19937_64& rng,
                           StateSequence* states) {
  const int K = model.num_states();
  // Random composition of `frames` into K positive dwell times.
  std::vector<int> cuts;
  std::uniform_int_distribution<int> pick(1, frames - 1);
  while (static_cast<int>(cuts.size()) < K - 1) {
    const int c = pick(rng);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(frames);
  StateSequence q;
  int state = 0;
  for (int t = 0; t < frames; ++t) {
    while (t >= cuts[static_cast<std::size_t>(state)]) ++state;
    q.push_back(state + 1);
  }
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Eigen::MatrixXd obs(frames, model.dim());
  for (int t = 0; t < frames; ++t) {
    const auto& g = model.states[static_cast<std::size_t>(q[static_cast<std::size_t>(t)] - 1)];
    double r = u01(rng);
    int m = 0;
    while (m + 1 < g.components() && r > g.weights(m)) r -= g.weights(m++);
    for (int d = 0; d < model.dim(); ++d) obs(t, d) = g.means(m, d) + std::sqrt(g.vars(m, d)) * n01(rng);
  }
  if (states) *states = q;
  return obs;
}

Eigen::MatrixXd reference_mfcc(std::span<const double> signal, const MfccConfig& cfg) {
  const auto L = static_cast<std::size_t>(std::lround(cfg.frame_ms * cfg.fs / 1000.0));
  const auto H = static_cast<std::size_t>(std::lround(cfg.hop_ms * cfg.fs / 1000.0));
  std::size_t N = cfg.fft_size > 0 ? static_cast<std::size_t>(cfg.fft_size) : 256;
  while (N < L) N *= 2;
  const std::size_t F = (signal.size() - L) / H + 1;
  const std::size_t bins = N / 2 + 1;
  const int nm = cfg.n_mel;

  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto inv_mel = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edge(static_cast<std::size_t>(nm + 2));
  for (int i = 0; i < nm + 2; ++i) edge[static_cast<std::size_t>(i)] = inv_mel(mel(cfg.fs / 2.0) * i / (nm + 1));

  Eigen::MatrixXd out(static_cast<Eigen::Index>(F), cfg.n_coef);
  std::vector<double> frame(L);
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t off = f * H;
    for (std::size_t n = 0; n < L; ++n) {
      const double prev = signal[off + (n == 0 ? 0 : n - 1)];
      const double hamming = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (L - 1.0));
      frame[n] = (signal[off + n] - cfg.preemphasis * prev) * hamming;
    }
    std::vector<double> power(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < L; ++n) {
        acc += frame[n] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * n % N) / N);
      }
      power[k] = std::norm(acc);
    }
    std::vector<double> logmel(static_cast<std::size_t>(nm));
    for (int m = 0; m < nm; ++m) {
      const double lo = edge[static_cast<std::size_t>(m)];
      const double mid = edge[static_cast<std::size_t>(m + 1)];
      const double hi = edge[static_cast<std::size_t>(m + 2)];
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double hz = k * cfg.fs / N;
        double w = 0.0;
        if (hz > lo && hz <= mid) w = (hz - lo) / (mid - lo);
        else if (hz > mid && hz < hi) w = (hi - hz) / (hi - mid);
        e += w * power[k];
      }
      logmel[static_cast<std::size_t>(m)] = std::log(std::max(e, cfg.log_floor));
    }
    for (int c = 1; c <= cfg.n_coef; ++c) {
      double acc = 0.0;
      for (int n = 0; n < nm; ++n) {
        acc += logmel[static_cast<std::size_t>(n)] * std::cos(M_PI * c * (n + 0.5) / nm);
      }
      out(static_cast<Eigen::Index>(f), c - 1) = std::sqrt(2.0 / nm) * acc;
    }
  }
  return out;
}

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  std::ostringstream name;
  name << "hsseg-" << tag << "-" << std::hex << rd() << rd();
  path_ = std::filesystem::temp_directory_path() / name.str();
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace hsseg::testing
