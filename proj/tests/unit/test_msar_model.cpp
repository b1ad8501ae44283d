#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hsseg/error.hpp"
#include "hsseg/msar_model.hpp"
#include "hsseg/synth.hpp"

namespace hsseg {
namespace {

AnnotationTrack cycle(std::initializer_list<std::size_t> lengths, int cycles = 1) {
  AnnotationTrack t;
  std::size_t at = 0;
  for (int c = 0; c < cycles; ++c) {
    int state = 1;
    for (std::size_t len : lengths) {
      t.intervals.push_back({at, at + len, state});
      at += len;
      state = next_regime(state);
    }
  }
  return t;
}

Recording ramp(std::size_t n) {
  Recording r;
  r.sample_rate = 1000;
  r.id = "ramp";
  for (std::size_t i = 0; i < n; ++i) r.samples.push_back(static_cast<double>(i));
  return r;
}

std::vector<double> simulate_ar(const std::vector<double>& phi, double q, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eta(0.0, std::sqrt(q));
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double v = eta(rng);
    for (std::size_t p = 0; p < phi.size() && p < t; ++p) v += phi[p] * x[t - 1 - p];
    x[t] = v;
  }
  return x;
}

MsarParams simple_params(int P) {
  MsarParams p;
  p.K = 4;
  p.P = P;
  p.phi = Eigen::MatrixXd::Zero(4, P);
  p.phi.col(0).setConstant(0.5);
  p.q = Eigen::VectorXd::Constant(4, 0.1);
  p.R = Eigen::VectorXd::Constant(4, 0.01);
  p.Z = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 4; ++i) {
    p.Z(i, i) = 0.9;
    p.Z(i, (i + 1) % 4) = 0.1;
  }
  return p;
}

TEST(DynamicCluster, LengthsPerRegime) {
  const auto c = dynamic_cluster(ramp(900), cycle({100, 200, 100, 500}));
  ASSERT_EQ(c.series.size(), 4u);
  EXPECT_EQ(c.series[0].size(), 100u);
  EXPECT_EQ(c.series[1].size(), 200u);
  EXPECT_EQ(c.series[2].size(), 100u);
  EXPECT_EQ(c.series[3].size(), 500u);
  EXPECT_EQ(c.total(), 900u);
  // Temporal order within a regime.
  EXPECT_EQ(c.series[1].front(), 100.0);
  EXPECT_EQ(c.series[1].back(), 299.0);
}

TEST(DynamicCluster, TwoCyclesDouble) {
  const auto c = dynamic_cluster(ramp(1800), cycle({100, 200, 100, 500}, 2));
  EXPECT_EQ(c.series[0].size(), 200u);
  EXPECT_EQ(c.series[3].size(), 1000u);
  EXPECT_EQ(c.series[0][100], 900.0);
}

TEST(DynamicCluster, TrackBeyondSignal) {
  EXPECT_THROW(dynamic_cluster(ramp(800), cycle({100, 200, 100, 500})), ValidationError);
}

TEST(ArFit, NoiselessAr1) {
  std::vector<double> y(50);
  y[0] = 1.0;
  for (std::size_t t = 1; t < y.size(); ++t) y[t] = 0.5 * y[t - 1];
  const ArFit fit = fit_ar_least_squares(y, 1);
  EXPECT_NEAR(fit.phi(0), 0.5, 1e-9);
  EXPECT_LE(fit.q, 1e-12);
}

TEST(ArFit, WhiteNoise) {
  const auto y = simulate_ar({}, 1.0, 10000, 11);
  const ArFit fit = fit_ar_least_squares(y, 4);
  EXPECT_LT(fit.phi.norm(), 0.1);
  double var = 0, mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  for (double v : y) var += (v - mean) * (v - mean);
  var /= y.size() - 1;
  EXPECT_NEAR(fit.q, var, 0.1 * var);
}

TEST(ArFit, RecoversAr4) {
  const std::vector<double> phi{0.5, -0.3, 0.2, -0.1};
  const auto y = simulate_ar(phi, 0.01, 10000, 5);
  const ArFit fit = fit_ar_least_squares(y, 4);
  for (int p = 0; p < 4; ++p) EXPECT_NEAR(fit.phi(p), phi[p], 0.05);
  EXPECT_NEAR(fit.q, 0.01, 0.001);
}

TEST(ArFit, Preconditions) {
  EXPECT_THROW(fit_ar_least_squares(std::vector<double>(30, 1.0), 4), ValidationError);  // too short
  EXPECT_THROW(fit_ar_least_squares(std::vector<double>(100, 1.0), 4), ValidationError);  // zero variance
  std::vector<double> alternating(100);
  for (std::size_t i = 0; i < alternating.size(); ++i) alternating[i] = i % 2 ? 1.0 : -1.0;
  // Lags 1 and 3 are identical columns.
  EXPECT_THROW(fit_ar_least_squares(alternating, 3), NumericalError);
}

TEST(ArFit, RegimeFitUsesRecordingLags) {
  // One AR(1) process labelled as alternating regimes: per-regime fits with
  // true lags recover the coefficient in every regime.
  const auto y = simulate_ar({0.8}, 0.1, 8000, 21);
  AnnotationTrack t = cycle({500, 500, 500, 500}, 4);
  for (int s = 1; s <= 4; ++s) {
    const ArFit fit = fit_ar_regime(y, t, s, 1);
    EXPECT_NEAR(fit.phi(0), 0.8, 0.05) << s;
    EXPECT_NEAR(fit.q, 0.1, 0.02) << s;
  }
}

TEST(ObsNoise, NoiselessAr1) {
  std::vector<double> y(5000);
  y[0] = 1.0;
  for (std::size_t t = 1; t < y.size(); ++t) y[t] = 0.999 * y[t - 1];
  EXPECT_LE(estimate_obs_noise(y, 1, 1000), 1e-10);
}

// Observation noise dominates the AR part here, so the residual variance
// sits close to R.
TEST(ObsNoise, Ar1PlusWhiteNoise) {
  auto y = simulate_ar({0.9}, 0.001, 10000, 8);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> eps(0.0, 0.2);
  for (double& v : y) v += eps(rng);
  const double r = estimate_obs_noise(y, 1, 1000);
  EXPECT_GE(r, 0.02);
  EXPECT_LE(r, 0.06);
}

// With a strong AR part the AR(1) residual variance of y = x + e is
// var_y (1 - a^2), a = phi var_x / var_y, not R.
TEST(ObsNoise, ResidualBiasMatchesClosedForm) {
  const double phi = 0.9, q = 0.01, r = 0.04;
  auto y = simulate_ar({phi}, q, 10000, 8);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> eps(0.0, std::sqrt(r));
  for (double& v : y) v += eps(rng);
  const double var_x = q / (1 - phi * phi);
  const double var_y = var_x + r;
  const double a = phi * var_x / var_y;
  const double expected = var_y * (1 - a * a);
  EXPECT_NEAR(estimate_obs_noise(y, 1, 1000), expected, 0.1 * expected);
}

TEST(ObsNoise, PureWhiteNoise) {
  const auto y = simulate_ar({}, 1.0, 10000, 17);
  const double r = estimate_obs_noise(y, 4, 1000);
  EXPECT_GE(r, 0.9);
  EXPECT_LE(r, 1.1);
}

TEST(ObsNoise, ShorterThanWindow) {
  EXPECT_THROW(estimate_obs_noise(std::vector<double>(500, 0.1), 4, 1000), ValidationError);
}

TEST(Transitions, LengthTwoIntervals) {
  const std::vector<AnnotationTrack> tracks{cycle({2, 2, 2, 2})};
  const Eigen::MatrixXd Z = init_transition_matrix(tracks);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(Z(i, i), 0.5);
    EXPECT_DOUBLE_EQ(Z(i, (i + 1) % 4), 0.5);
    EXPECT_DOUBLE_EQ(Z.row(i).sum(), 1.0);
  }
  EXPECT_EQ(Z(0, 2), 0.0);
  EXPECT_EQ(Z(1, 0), 0.0);
}

TEST(Transitions, LengthHundredIntervals) {
  const std::vector<AnnotationTrack> tracks{cycle({100, 100, 100, 100})};
  const Eigen::MatrixXd Z = init_transition_matrix(tracks);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(Z(i, i), 0.99, 1e-15);
}

TEST(Transitions, MissingRegime) {
  const std::vector<AnnotationTrack> tracks{cycle({100, 100})};
  EXPECT_THROW(init_transition_matrix(tracks), ValidationError);
}

TEST(Pool, SingleInputIdentity) {
  const MsarParams p = simple_params(4);
  const std::vector<MsarParams> in{p};
  const MsarParams out = pool_parameters(in);
  EXPECT_EQ(out.phi, p.phi);
  EXPECT_EQ(out.q, p.q);
  EXPECT_EQ(out.R, p.R);
  EXPECT_TRUE(out.Z.isApprox(p.Z, 1e-15));
}

TEST(Pool, ArithmeticMean) {
  MsarParams a = simple_params(4);
  MsarParams b = simple_params(4);
  a.phi.col(0).setConstant(0.2);
  b.phi.col(0).setConstant(0.4);
  const std::vector<MsarParams> in{a, b};
  EXPECT_NEAR(pool_parameters(in).phi(2, 0), 0.3, 1e-15);
  const std::vector<double> w{3.0, 1.0};
  EXPECT_NEAR(pool_parameters(in, w).phi(2, 0), 0.25, 1e-15);
}

TEST(Pool, Errors) {
  EXPECT_THROW(pool_parameters(std::vector<MsarParams>{}), ValidationError);
  const std::vector<MsarParams> mixed{simple_params(4), simple_params(6)};
  EXPECT_THROW(pool_parameters(mixed), ValidationError);
}

TEST(StateSpace, ScalarCase) {
  MsarParams p = simple_params(1);
  p.phi.setConstant(0.9);
  const StateSpaceView v = to_state_space(p);
  EXPECT_DOUBLE_EQ(v.A[2](0, 0), 0.9);
  EXPECT_DOUBLE_EQ(v.Q[2](0, 0), 0.1);
  EXPECT_EQ(v.C.size(), 1);
}

TEST(StateSpace, CompanionForm) {
  MsarParams p = simple_params(2);
  p.phi.row(1) << 0.3, -0.7;
  const StateSpaceView v = to_state_space(p);
  Eigen::Matrix2d expected;
  expected << 0.3, -0.7, 1.0, 0.0;
  EXPECT_EQ(Eigen::MatrixXd(v.A[1]), Eigen::MatrixXd(expected));
  EXPECT_EQ(v.C(0), 1.0);
  EXPECT_EQ(v.C(1), 0.0);
  EXPECT_EQ(v.Q[1](1, 1), 0.0);
}

TEST(Params, ValidateCatchesTopology) {
  MsarParams p = simple_params(4);
  p.Z(0, 0) = 0.8;
  p.Z(0, 2) = 0.1;
  EXPECT_THROW(p.validate(), ValidationError);
  p = simple_params(4);
  p.R(0) = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Params, JsonRoundTripIsExact) {
  MsarParams p = demo_msar_params();
  p.q(1) = 1.0 / 3.0;
  const MsarParams back = msar_from_json(to_json(p));
  EXPECT_EQ(back.phi, p.phi);
  EXPECT_EQ(back.q, p.q);
  EXPECT_EQ(back.R, p.R);
  EXPECT_EQ(back.Z, p.Z);
  nlohmann::json doc = to_json(p);
  doc["schema_version"] = 99;
  EXPECT_THROW(msar_from_json(doc), FormatError);
}

TEST(FitMsar, RecoversDemoParameters) {
  const MsarParams truth = demo_msar_params();
  SynthSpec spec;
  spec.params = truth;
  spec.params.R.setConstant(1e-6);
  const auto means = demo_duration_means();
  const auto sds = demo_duration_sds();
  std::vector<double> m, s;
  for (int j = 0; j < 4; ++j) {
    m.push_back(means[j] * 1000);
    s.push_back(sds[j] * 1000);
  }
  spec.plan = cyclic_duration_plan(m, s, 60000, 1, 3);
  spec.length = 60000;
  spec.seed = 3;
  const SynthOutput gen = generate_msar(spec);
  Recording rec{gen.signal, 1000, "demo"};
  const MsarParams fit = fit_msar(rec, AnnotationTrack::from_states(gen.states), MsarFitOptions{});
  fit.validate();
  for (int j = 0; j < 4; ++j) {
    for (int p = 0; p < 4; ++p) EXPECT_NEAR(fit.phi(j, p), truth.phi(j, p), 0.05) << j << "," << p;
  }
}

}  // namespace
}  // namespace hsseg
