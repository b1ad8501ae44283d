#include "hsseg/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "hsseg/error.hpp"

namespace hsseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * M_PI);

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

// log(c_m N(x; mu_m, diag var_m)) for every component.
void component_log_terms(const GaussianMixture& g, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                         Eigen::VectorXd& out) {
  const int m_count = g.components();
  out.resize(m_count);
  const double d = static_cast<double>(g.dim());
  for (int m = 0; m < m_count; ++m) {
    const double lw = safe_log(g.weights(m));
    if (lw == kNegInf) {
      out(m) = kNegInf;
      continue;
    }
    const auto diff = (x - g.means.row(m)).array();
    const double maha = (diff.square() / g.vars.row(m).array()).sum();
    const double logdet = g.vars.row(m).array().log().sum();
    out(m) = lw - 0.5 * (d * kLog2Pi + logdet + maha);
  }
}

double log_sum(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::MatrixXd emission_table(const HmmParams& model, const Eigen::MatrixXd& obs) {
  const int k = model.num_states();
  Eigen::MatrixXd b(obs.rows(), k);
  Eigen::VectorXd terms;
  for (Eigen::Index t = 0; t < obs.rows(); ++t) {
    for (int j = 0; j < k; ++j) {
      component_log_terms(model.states[static_cast<std::size_t>(j)], obs.row(t), terms);
      b(t, j) = log_sum(terms);
    }
  }
  return b;
}

Eigen::MatrixXd log_matrix(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double v) { return safe_log(v); });
}

void check_input(const HmmParams& model, const FeatureSequence& features) {
  if (features.dim() != model.dim()) {
    throw ValidationError("feature dimension " + std::to_string(features.dim()) +
                          " does not match model dimension " + std::to_string(model.dim()));
  }
  if (features.size() < model.num_states()) {
    throw ValidationError("infeasible path: " + std::to_string(features.size()) +
                          " frames for a " + std::to_string(model.num_states()) +
                          "-state left-to-right model");
  }
}

// Log-domain forward variables; returns the terminal log-likelihood.
double forward_pass(const Eigen::VectorXd& log_pi, const Eigen::MatrixXd& log_a,
                    const Eigen::MatrixXd& b, Eigen::MatrixXd& alpha) {
  const Eigen::Index steps = b.rows();
  const Eigen::Index k = b.cols();
  alpha.resize(steps, k);
  for (Eigen::Index j = 0; j < k; ++j) alpha(0, j) = log_pi(j) + b(0, j);
  for (Eigen::Index t = 1; t < steps; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double acc = kNegInf;
      for (Eigen::Index i = 0; i < k; ++i) acc = log_add(acc, alpha(t - 1, i) + log_a(i, j));
      alpha(t, j) = acc + b(t, j);
    }
  }
  return alpha(steps - 1, k - 1);
}

void backward_pass(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& b, Eigen::MatrixXd& beta) {
  const Eigen::Index steps = b.rows();
  const Eigen::Index k = b.cols();
  beta.resize(steps, k);
  beta.row(steps - 1).setConstant(kNegInf);
  beta(steps - 1, k - 1) = 0.0;
  for (Eigen::Index t = steps - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      double acc = kNegInf;
      for (Eigen::Index j = 0; j < k; ++j) acc = log_add(acc, log_a(i, j) + b(t + 1, j) + beta(t + 1, j));
      beta(t, i) = acc;
    }
  }
}

std::uint64_t next_u64(std::mt19937_64& rng) { return rng(); }

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(next_u64(rng) >> 11) * 0x1.0p-53;
}

struct Clusters {
  Eigen::MatrixXd centers;
  std::vector<int> assign;
};

// K-means with k-means++ seeding; stops adding seeds once every point
// coincides with a chosen centre.
Clusters kmeans(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng, int iters) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> seeds;
  seeds.push_back(static_cast<Eigen::Index>(next_u64(rng) % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd d2 = (x.rowwise() - x.row(seeds.front())).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < k) {
    const double total = d2.sum();
    if (!(total > 0.0)) break;
    const double target = unit_uniform(rng) * total;
    double acc = 0.0;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2(i);
      if (acc > target && d2(i) > 0.0) {
        pick = i;
        break;
      }
    }
    if (d2(pick) == 0.0) {
      for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(pick);
    d2 = d2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }

  Clusters c;
  const auto kk = static_cast<Eigen::Index>(seeds.size());
  c.centers.resize(kk, x.cols());
  for (Eigen::Index s = 0; s < kk; ++s) c.centers.row(s) = x.row(seeds[static_cast<std::size_t>(s)]);
  c.assign.assign(static_cast<std::size_t>(n), -1);

  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = (x.row(i) - c.centers.row(0)).squaredNorm();
      for (Eigen::Index s = 1; s < kk; ++s) {
        const double d = (x.row(i) - c.centers.row(s)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      if (c.assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        c.assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(kk);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto s = c.assign[static_cast<std::size_t>(i)];
      sums.row(s) += x.row(i);
      counts(s) += 1.0;
    }
    for (Eigen::Index s = 0; s < kk; ++s) {
      if (counts(s) > 0.0) {
        c.centers.row(s) = sums.row(s) / counts(s);
        continue;
      }
      // Empty cluster: take over the point farthest from its centre.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (x.row(i) - c.centers.row(c.assign[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      c.centers.row(s) = x.row(far);
      c.assign[static_cast<std::size_t>(far)] = static_cast<int>(s);
      changed = true;
    }
    if (!changed) break;
  }
  return c;
}

GaussianMixture mixture_from_frames(const Eigen::MatrixXd& x, int mixtures, double var_floor,
                                    std::mt19937_64& rng, int iters, int state,
                                    std::vector<std::string>* warnings) {
  const int want = std::min<int>(mixtures, static_cast<int>(x.rows()));
  const Clusters c = kmeans(x, want, rng, iters);
  const auto kk = c.centers.rows();
  if (kk < mixtures && warnings != nullptr) {
    warnings->push_back("state " + std::to_string(state + 1) + ": reduced to " +
                        std::to_string(kk) + " mixture component(s) (" +
                        std::to_string(x.rows()) + " frames)");
  }
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Zero(kk);
  g.means = c.centers;
  g.vars = Eigen::MatrixXd::Zero(kk, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto s = c.assign[static_cast<std::size_t>(i)];
    g.weights(s) += 1.0;
    g.vars.row(s) += (x.row(i) - g.means.row(s)).array().square().matrix();
  }
  for (Eigen::Index s = 0; s < kk; ++s) {
    if (g.weights(s) > 0.0) g.vars.row(s) /= g.weights(s);
  }
  g.weights /= static_cast<double>(x.rows());
  g.vars = g.vars.cwiseMax(var_floor);
  return g;
}

HmmParams model_from_alignment(std::span<const FeatureSequence> data,
                               const std::vector<std::vector<int>>& align, const HmmOptions& opts,
                               std::mt19937_64& rng, std::vector<std::string>* warnings) {
  const int k = opts.states;
  const auto dim = data.front().dim();
  HmmParams model;
  model.pi = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, k);
  std::vector<std::vector<Eigen::RowVectorXd>> per_state(static_cast<std::size_t>(k));
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& a = align[s];
    model.pi(a.front()) += 1.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      per_state[static_cast<std::size_t>(a[t])].push_back(data[s].frames.row(static_cast<Eigen::Index>(t)));
      if (t + 1 < a.size()) counts(a[t], a[t + 1]) += 1.0;
    }
  }
  model.pi /= model.pi.sum();
  model.A = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    if (i == k - 1) {
      model.A(i, i) = 1.0;
      continue;
    }
    const double row = counts(i, i) + counts(i, i + 1);
    if (row > 0.0) {
      model.A(i, i) = counts(i, i) / row;
      model.A(i, i + 1) = counts(i, i + 1) / row;
    } else {
      model.A(i, i) = 0.5;
      model.A(i, i + 1) = 0.5;
    }
  }
  for (int j = 0; j < k; ++j) {
    const auto& frames = per_state[static_cast<std::size_t>(j)];
    if (frames.empty()) throw ValidationError("segmental k-means: state " + std::to_string(j + 1) + " received no frames");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(frames.size()), dim);
    for (std::size_t r = 0; r < frames.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = frames[r];
    model.states.push_back(
        mixture_from_frames(x, opts.mixtures, opts.var_floor, rng, opts.kmeans_iters, j, warnings));
  }
  return model;
}

}  // namespace

double GaussianMixture::log_density(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  Eigen::VectorXd terms;
  component_log_terms(*this, x, terms);
  return log_sum(terms);
}

void HmmParams::validate(double var_floor) const {
  const int k = num_states();
  if (k < 1 || pi.size() != k || A.rows() != k || A.cols() != k) {
    throw ValidationError("HMM: inconsistent shapes");
  }
  if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-12) {
    throw ValidationError("HMM: pi is not a probability vector");
  }
  for (int i = 0; i < k; ++i) {
    if (std::abs(A.row(i).sum() - 1.0) > 1e-12 || (A.row(i).array() < 0.0).any()) {
      throw ValidationError("HMM: row " + std::to_string(i + 1) + " of A is not a probability vector");
    }
    for (int j = 0; j < k; ++j) {
      const bool allowed = j == i || (j == i + 1);
      if (!allowed && A(i, j) != 0.0) {
        throw ValidationError("HMM: transition " + std::to_string(i + 1) + "->" +
                              std::to_string(j + 1) + " breaks the left-to-right topology");
      }
    }
  }
  const int d = dim();
  for (int j = 0; j < k; ++j) {
    const auto& g = states[static_cast<std::size_t>(j)];
    if (g.components() < 1 || g.means.rows() != g.components() || g.vars.rows() != g.components() ||
        g.dim() != d || g.vars.cols() != d) {
      throw ValidationError("HMM: malformed mixture in state " + std::to_string(j + 1));
    }
    if ((g.weights.array() < 0.0).any() || std::abs(g.weights.sum() - 1.0) > 1e-12) {
      throw ValidationError("HMM: mixture weights of state " + std::to_string(j + 1) + " do not sum to 1");
    }
    if (!(g.vars.minCoeff() > 0.0) || g.vars.minCoeff() < var_floor) {
      throw ValidationError("HMM: variance below floor in state " + std::to_string(j + 1));
    }
  }
}

HmmParams segmental_kmeans_init(std::span<const FeatureSequence> data, const HmmOptions& opts,
                                std::vector<std::string>* warnings) {
  if (data.empty()) throw ValidationError("segmental k-means: empty dataset");
  if (opts.states < 1 || opts.mixtures < 1) throw ValidationError("segmental k-means: bad options");
  const auto dim = data.front().dim();
  for (const auto& seq : data) {
    if (seq.dim() != dim) throw ValidationError("segmental k-means: mixed feature dimensions");
    if (seq.size() < opts.states) {
      throw ValidationError("segmental k-means: sequence '" + seq.id + "' has " +
                            std::to_string(seq.size()) + " frames, fewer than the state count");
    }
  }
  std::mt19937_64 rng(opts.seed);
  std::vector<std::vector<int>> align(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto f = static_cast<std::size_t>(data[s].size());
    align[s].resize(f);
    for (std::size_t t = 0; t < f; ++t) {
      align[s][t] = static_cast<int>(t * static_cast<std::size_t>(opts.states) / f);
    }
  }
  std::vector<std::string> round_warnings;
  HmmParams model = model_from_alignment(data, align, opts, rng, &round_warnings);
  for (int round = 0; round < opts.realign_rounds; ++round) {
    bool changed = false;
    for (std::size_t s = 0; s < data.size(); ++s) {
      const auto path = viterbi_loglik(model, data[s]);
      if (!std::isfinite(path.loglik)) continue;
      for (std::size_t t = 0; t < path.path.size(); ++t) {
        const int st = path.path[t] - 1;
        changed = changed || st != align[s][t];
        align[s][t] = st;
      }
    }
    if (!changed) break;
    round_warnings.clear();
    model = model_from_alignment(data, align, opts, rng, &round_warnings);
  }
  if (warnings != nullptr) warnings->insert(warnings->end(), round_warnings.begin(), round_warnings.end());
  return model;
}

HmmParams baum_welch_train(const HmmParams& init, std::span<const FeatureSequence> data,
                           const HmmOptions& opts, TrainingReport* report) {
  init.validate();
  if (data.empty()) throw ValidationError("baum-welch: empty dataset");
  for (const auto& seq : data) check_input(init, seq);

  const int k = init.num_states();
  const int d = init.dim();
  HmmParams model = init;
  TrainingReport local;
  double prev = kNegInf;

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd log_pi = model.pi.unaryExpr([](double v) { return safe_log(v); });
    const Eigen::MatrixXd log_a = log_matrix(model.A);

    Eigen::VectorXd pi_acc = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd a_acc = Eigen::MatrixXd::Zero(k, k);
    std::vector<Eigen::VectorXd> occ(static_cast<std::size_t>(k));
    std::vector<Eigen::MatrixXd> s1(static_cast<std::size_t>(k));
    std::vector<Eigen::MatrixXd> s2(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      const int m = model.states[static_cast<std::size_t>(j)].components();
      occ[static_cast<std::size_t>(j)] = Eigen::VectorXd::Zero(m);
      s1[static_cast<std::size_t>(j)] = Eigen::MatrixXd::Zero(m, d);
      s2[static_cast<std::size_t>(j)] = Eigen::MatrixXd::Zero(m, d);
    }

    double total = 0.0;
    Eigen::MatrixXd alpha, beta;
    Eigen::VectorXd terms;
    for (const auto& seq : data) {
      const Eigen::MatrixXd b = emission_table(model, seq.frames);
      const double ll = forward_pass(log_pi, log_a, b, alpha);
      if (!std::isfinite(ll)) {
        throw NumericalError("baum-welch: sequence '" + seq.id +
                             "' has zero likelihood at iteration " + std::to_string(iter));
      }
      backward_pass(log_a, b, beta);
      total += ll;
      const Eigen::Index steps = b.rows();
      for (Eigen::Index t = 0; t < steps; ++t) {
        for (int j = 0; j < k; ++j) {
          const double lg = alpha(t, j) + beta(t, j) - ll;
          if (lg == kNegInf) continue;
          const double gamma = std::exp(lg);
          if (t == 0) pi_acc(j) += gamma;
          if (t + 1 < steps) {
            for (int jj = j; jj <= std::min(j + 1, k - 1); ++jj) {
              const double lx = alpha(t, j) + log_a(j, jj) + b(t + 1, jj) + beta(t + 1, jj) - ll;
              if (lx != kNegInf) a_acc(j, jj) += std::exp(lx);
            }
          }
          const auto& g = model.states[static_cast<std::size_t>(j)];
          component_log_terms(g, seq.frames.row(t), terms);
          const auto sj = static_cast<std::size_t>(j);
          for (int m = 0; m < g.components(); ++m) {
            if (terms(m) == kNegInf) continue;
            const double r = gamma * std::exp(terms(m) - b(t, j));
            occ[sj](m) += r;
            s1[sj].row(m) += r * seq.frames.row(t);
            s2[sj].row(m) += r * seq.frames.row(t).array().square().matrix();
          }
        }
      }
    }
    if (std::isnan(total)) {
      throw NumericalError("baum-welch: training diverged (NaN likelihood) at iteration " +
                           std::to_string(iter));
    }
    local.loglik.push_back(total);
    if (iter > 0) {
      const double rel = (total - prev) / std::max(std::abs(prev), 1e-300);
      if (rel < opts.tol) {
        local.converged = true;
        break;
      }
    }
    if (iter >= opts.max_iter) break;
    prev = total;

    // M-step.
    HmmParams next = model;
    next.pi = pi_acc / pi_acc.sum();
    for (int i = 0; i < k; ++i) {
      const double row = a_acc.row(i).sum();
      if (row > 0.0) next.A.row(i) = a_acc.row(i) / row;
    }
    for (int j = 0; j < k; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      auto& g = next.states[sj];
      const double state_occ = occ[sj].sum();
      if (!(state_occ > 0.0)) continue;
      g.weights = occ[sj] / state_occ;
      for (int m = 0; m < g.components(); ++m) {
        const double o = occ[sj](m);
        if (!(o > 0.0)) continue;
        const Eigen::RowVectorXd mu = s1[sj].row(m) / o;
        Eigen::RowVectorXd var = s2[sj].row(m) / o - mu.array().square().matrix();
        g.means.row(m) = mu;
        g.vars.row(m) = var.cwiseMax(opts.var_floor);
      }
    }
    model = std::move(next);
    ++local.iterations;
  }
  if (report != nullptr) *report = std::move(local);
  return model;
}

double forward_loglik(const HmmParams& model, const FeatureSequence& features) {
  check_input(model, features);
  Eigen::MatrixXd alpha;
  return forward_pass(model.pi.unaryExpr([](double v) { return safe_log(v); }), log_matrix(model.A),
                      emission_table(model, features.frames), alpha);
}

ViterbiScore viterbi_loglik(const HmmParams& model, const FeatureSequence& features) {
  check_input(model, features);
  const Eigen::MatrixXd b = emission_table(model, features.frames);
  const Eigen::MatrixXd log_a = log_matrix(model.A);
  const Eigen::Index steps = b.rows();
  const Eigen::Index k = b.cols();
  Eigen::MatrixXd delta(steps, k);
  Eigen::MatrixXi back(steps, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    delta(0, j) = safe_log(model.pi(j)) + b(0, j);
    back(0, j) = -1;
  }
  for (Eigen::Index t = 1; t < steps; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double v = delta(t - 1, i) + log_a(i, j);
        if (v > best) {
          best = v;
          arg = static_cast<int>(i);
        }
      }
      delta(t, j) = best + b(t, j);
      back(t, j) = arg;
    }
  }
  ViterbiScore out;
  out.loglik = delta(steps - 1, k - 1);
  out.path.assign(static_cast<std::size_t>(steps), 0);
  int s = static_cast<int>(k - 1);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    out.path[static_cast<std::size_t>(t)] = s + 1;
    if (t > 0) s = back(t, s);
  }
  return out;
}

namespace {

// Earlier entries win ties.
constexpr ClassLabel kTieOrder[] = {ClassLabel::Abnormal, ClassLabel::XFactor, ClassLabel::Normal};

}  // namespace

BeatDecision classify_beat(const ClassifierBank& bank, const FeatureSequence& features,
                           bool use_xfactor) {
  BeatDecision out;
  double best = kNegInf;
  bool found = false;
  bool any_model = false;
  for (const ClassLabel label : kTieOrder) {
    if (label == ClassLabel::XFactor && !use_xfactor) continue;
    const auto it = bank.models.find(label);
    if (it == bank.models.end()) {
      if (label == ClassLabel::XFactor) throw ValidationError("classifier bank has no xfactor model");
      throw ValidationError(std::string("classifier bank has no ") + std::string(to_string(label)) + " model");
    }
    any_model = true;
    double score = kNegInf;
    try {
      score = viterbi_loglik(it->second, features).loglik / static_cast<double>(features.size());
    } catch (const ValidationError&) {
      continue;
    }
    if (label == ClassLabel::Normal) out.score_normal = score;
    if (label == ClassLabel::Abnormal) out.score_abnormal = score;
    if (label == ClassLabel::XFactor) out.score_xfactor = score;
    if (score > best || (!found && score == best && std::isfinite(score))) {
      best = score;
      out.label = label;
      found = true;
    }
  }
  if (!any_model || !found || best == kNegInf) {
    throw ValidationError("unclassifiable beat '" + features.id + "': no model yields a finite score");
  }
  return out;
}

ClassLabel classify_recording(std::span<const ClassLabel> beat_labels) {
  if (beat_labels.empty()) throw ValidationError("classify_recording: no beats");
  ClassLabel best = kTieOrder[0];
  long best_count = -1;
  for (const ClassLabel label : kTieOrder) {
    const long c = std::count(beat_labels.begin(), beat_labels.end(), label);
    if (c > best_count) {
      best_count = c;
      best = label;
    }
  }
  return best;
}

std::vector<std::pair<std::size_t, std::size_t>> one_second_windows(const Recording& rec) {
  validate_recording(rec);
  const auto w = static_cast<std::size_t>(rec.sample_rate);
  if (rec.samples.size() < w) {
    throw ValidationError("recording '" + rec.id + "' is shorter than one second");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s + w <= rec.samples.size(); s += w) out.emplace_back(s, s + w);
  return out;
}

std::vector<BeatSegment> window_xfactor(const Recording& rec, const MfccConfig& cfg, ClassLabel label) {
  std::vector<BeatSegment> out;
  for (const auto& [start, end] : one_second_windows(rec)) {
    BeatSegment seg;
    seg.recording_id = rec.id;
    seg.label = label;
    seg.start = start;
    seg.end = end;
    seg.features = extract_mfcc(std::span<const double>(rec.samples).subspan(start, end - start), cfg,
                                rec.id + ":" + std::to_string(out.size()));
    out.push_back(std::move(seg));
  }
  return out;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) throw FormatError("empty matrix");
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const HmmParams& model) {
  nlohmann::json doc;
  doc["pi"] = std::vector<double>(model.pi.begin(), model.pi.end());
  doc["A"] = matrix_json(model.A);
  doc["states"] = nlohmann::json::array();
  for (const auto& g : model.states) {
    doc["states"].push_back({{"weights", std::vector<double>(g.weights.begin(), g.weights.end())},
                             {"means", matrix_json(g.means)},
                             {"vars", matrix_json(g.vars)}});
  }
  return doc;
}

HmmParams hmm_from_json(const nlohmann::json& doc) {
  try {
    HmmParams m;
    m.pi = vector_from(doc.at("pi"));
    m.A = matrix_from(doc.at("A"));
    for (const auto& s : doc.at("states")) {
      GaussianMixture g;
      g.weights = vector_from(s.at("weights"));
      g.means = matrix_from(s.at("means"));
      g.vars = matrix_from(s.at("vars"));
      m.states.push_back(std::move(g));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("HMM model: ") + err.what());
  }
}

nlohmann::json to_json(const MfccConfig& cfg) {
  return {{"fs", cfg.fs},           {"frame_ms", cfg.frame_ms}, {"hop_ms", cfg.hop_ms},
          {"preemphasis", cfg.preemphasis}, {"n_mel", cfg.n_mel}, {"n_coef", cfg.n_coef},
          {"log_floor", cfg.log_floor}, {"fft_size", cfg.fft_size}};
}

MfccConfig mfcc_config_from_json(const nlohmann::json& doc) {
  try {
    MfccConfig c;
    c.fs = doc.at("fs").get<double>();
    c.frame_ms = doc.at("frame_ms").get<double>();
    c.hop_ms = doc.at("hop_ms").get<double>();
    c.preemphasis = doc.at("preemphasis").get<double>();
    c.n_mel = doc.at("n_mel").get<int>();
    c.n_coef = doc.at("n_coef").get<int>();
    c.log_floor = doc.at("log_floor").get<double>();
    c.fft_size = doc.at("fft_size").get<int>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("feature config: ") + err.what());
  }
}

nlohmann::json to_json(const ClassifierBank& bank) {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["feature_config"] = to_json(bank.features);
  doc["models"] = nlohmann::json::object();
  for (const auto& [label, model] : bank.models) doc["models"][std::string(to_string(label))] = to_json(model);
  return doc;
}

ClassifierBank classifier_bank_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != 1) throw FormatError("unsupported classifier schema_version");
    ClassifierBank bank;
    bank.features = mfcc_config_from_json(doc.at("feature_config"));
    for (const auto& [name, model] : doc.at("models").items()) {
      bank.models.emplace(parse_class_label(name), hmm_from_json(model));
    }
    int dim = -1;
    for (const auto& [label, model] : bank.models) {
      if (dim >= 0 && model.dim() != dim) throw FormatError("classifier models disagree on feature dimension");
      dim = model.dim();
    }
    return bank;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("classifier bank: ") + err.what());
  }
}

}  // namespace hsseg
