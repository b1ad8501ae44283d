#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hsseg/duration_viterbi.hpp"
#include "hsseg/error.hpp"
#include "oracles.hpp"

namespace hsseg::testing {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Two tone bursts per beat: a louder one at the onset and a softer one
// `split` seconds later.
std::vector<double> pulse_train(double beats_per_s, double fs, double seconds, double split = 0.3) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs), 0.0);
  const double period = fs / beats_per_s;
  const auto burst = static_cast<std::size_t>(0.04 * fs);
  for (double onset = 0; onset + period * split + burst < x.size(); onset += period) {
    for (std::size_t i = 0; i < burst; ++i) {
      const double w = std::sin(std::numbers::pi * i / burst);
      const double s = std::sin(2 * std::numbers::pi * 60.0 * i / fs) * w;
      x[static_cast<std::size_t>(onset) + i] += s;
      x[static_cast<std::size_t>(onset + period * split) + i] += 0.6 * s;
    }
  }
  return x;
}

TEST(HeartRate, SixtyBpm) {
  const auto est = estimate_heart_rate(pulse_train(1.0, 1000, 10), 1000);
  EXPECT_NEAR(est.hr, 60.0, 2.0);
  EXPECT_TRUE(est.confident);
  EXPECT_NEAR(est.t_sys, 0.3, 0.02);
  est.validate();
}

TEST(HeartRate, NinetyBpm) {
  const auto est = estimate_heart_rate(pulse_train(1.5, 1000, 10), 1000);
  EXPECT_NEAR(est.hr, 90.0, 3.0);
}

TEST(HeartRate, WhiteNoiseFailsOrFlags) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(10000);
  for (double& v : x) v = n(rng);
  try {
    EXPECT_FALSE(estimate_heart_rate(x, 1000).confident);
  } catch (const NumericalError&) {
    SUCCEED();
  }
}

TEST(HeartRate, NeedsFiveSeconds) {
  EXPECT_THROW(estimate_heart_rate(pulse_train(1.0, 1000, 4), 1000), ValidationError);
}

DurationStats stats_of(double s1, double s2, double sd) {
  DurationStats st;
  st.mean_s = {s1, 0.2, s2, 0.5};
  st.sd_s = {sd, sd, sd, sd};
  return st;
}

TEST(DurationModel, DmaxFromHeartRate) {
  HeartRateEstimate hr;
  hr.hr = 60;
  hr.t_sys = 0.3;
  const auto dm = build_duration_model(hr, stats_of(0.1, 0.1, 0.02), 1000);
  EXPECT_EQ(dm.d_max, 1000);
  EXPECT_EQ(dm.dP.cols(), 1000);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(dm.dP.row(j).sum(), 1.0, 1e-9);
  dm.validate();
  // Systole centred on t_sys minus the S1 mean.
  Eigen::Index at;
  dm.dP.row(1).maxCoeff(&at);
  EXPECT_EQ(at + 1, 200);
}

TEST(DurationModel, DegenerateSdsGiveOneHot) {
  HeartRateEstimate hr;
  hr.hr = 150;  // d_max = 40 at 100 Hz
  hr.t_sys = 0.2;
  const auto dm = build_duration_model(hr, stats_of(0.1, 0.1, 0.0), 100);
  ASSERT_EQ(dm.d_max, 40);
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(dm.dP(j, 9), 1.0) << j;
    EXPECT_EQ(dm.dP.row(j).sum(), 1.0) << j;
  }
}

TEST(DurationModel, InfeasibleMean) {
  HeartRateEstimate hr;
  hr.hr = 60;
  hr.t_sys = 0.15;  // shorter than the S1 mean
  EXPECT_THROW(build_duration_model(hr, stats_of(0.2, 0.1, 0.02), 1000), ValidationError);
}

TEST(DurationModel, StatsFromTracksSkipEdges) {
  AnnotationTrack t;
  std::size_t at = 0;
  const std::size_t lengths[] = {7, 100, 300, 80, 500, 120, 280, 90, 510, 3};
  int state = 1;
  for (std::size_t len : lengths) {
    t.intervals.push_back({at, at + len, state});
    at += len;
    state = next_regime(state);
  }
  const std::vector<AnnotationTrack> tracks{t};
  const DurationStats st = duration_stats_from_tracks(tracks, 1000);
  // The truncated 7- and 3-sample edge intervals are ignored.
  EXPECT_NEAR(st.mean_s[0], 0.505, 1e-12);
  EXPECT_NEAR(st.sd_s[0], std::sqrt(2 * 0.005 * 0.005), 1e-12);
  EXPECT_NEAR(st.mean_s[1], 0.110, 1e-12);
  EXPECT_NEAR(st.mean_s[2], 0.290, 1e-12);
  EXPECT_NEAR(st.mean_s[3], 0.085, 1e-12);
  const DurationStats back = duration_stats_from_json(to_json(st));
  EXPECT_EQ(back.mean_s, st.mean_s);
  EXPECT_EQ(back.sd_s, st.sd_s);
}

VectorXd uniform_pi() { return VectorXd::Constant(4, 0.25); }

std::vector<std::size_t> segment_lengths(const StateSequence& path) {
  std::vector<std::size_t> out{1};
  for (std::size_t t = 1; t < path.size(); ++t) {
    if (path[t] == path[t - 1]) {
      ++out.back();
    } else {
      EXPECT_EQ(path[t], next_regime(path[t - 1]));
      out.push_back(1);
    }
  }
  return out;
}

TEST(SkfViterbi, MatchesEnumerationAtT12) {
  std::mt19937_64 rng(2024);
  const MatrixXd a = cyclic_successor_matrix(4);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd M(12, 4);
    for (int t = 0; t < 12; ++t) M.row(t) = random_probability_vector(4, rng).transpose();
    DurationModel dm;
    dm.d_max = 4;
    dm.dP.resize(4, 4);
    for (int j = 0; j < 4; ++j) dm.dP.row(j) = random_probability_vector(4, rng).transpose();
    const VectorXd pi0 = random_probability_vector(4, rng);
    const auto got = skf_viterbi(M, dm, a, pi0);
    const auto want = brute_force_duration_viterbi(M, dm, a, pi0);
    EXPECT_NEAR(got.log_score, want.best, 1e-9) << trial;
    if (want.unique) EXPECT_EQ(got.path, want.path) << trial;
  }
}

TEST(SkfViterbi, ForcedDuration) {
  DurationModel dm;
  dm.d_max = 3;
  dm.dP = MatrixXd::Zero(4, 3);
  dm.dP.col(2).setOnes();
  const MatrixXd M = MatrixXd::Constant(12, 4, 0.25);
  const auto res = skf_viterbi(M, dm, cyclic_successor_matrix(4), uniform_pi());
  ASSERT_EQ(res.path.size(), 12u);
  const auto lengths = segment_lengths(res.path);
  // Every segment that starts inside the record lasts exactly three samples.
  for (std::size_t i = 1; i + 1 < lengths.size(); ++i) EXPECT_EQ(lengths[i], 3u) << i;
  EXPECT_LE(lengths.front(), 3u);
  EXPECT_LE(lengths.back(), 3u);
}

TEST(SkfViterbi, ConsistentEvidence) {
  const StateSequence truth{2, 2, 3, 3, 3, 3, 4, 1, 1, 2, 2, 2, 3, 3};
  MatrixXd M = MatrixXd::Zero(truth.size(), 4);
  for (std::size_t t = 0; t < truth.size(); ++t) M(t, truth[t] - 1) = 1.0;
  DurationModel dm;
  dm.d_max = 5;
  dm.dP = MatrixXd::Constant(4, 5, 0.2);
  EXPECT_EQ(skf_viterbi(M, dm, cyclic_successor_matrix(4), uniform_pi()).path, truth);
}

TEST(SkfViterbi, Preconditions) {
  DurationModel dm;
  dm.d_max = 2;
  dm.dP = MatrixXd::Constant(4, 2, 0.5);
  const MatrixXd M = MatrixXd::Constant(6, 4, 0.25);
  MatrixXd with_self = cyclic_successor_matrix(4);
  with_self(0, 0) = 1.0;
  EXPECT_THROW(skf_viterbi(M, dm, with_self, uniform_pi()), ValidationError);
  // Evidence for regime 1 only, but durations cap at 2 and the chain must move on.
  MatrixXd stuck = MatrixXd::Zero(6, 4);
  stuck.col(0).setOnes();
  EXPECT_THROW(skf_viterbi(stuck, dm, cyclic_successor_matrix(4), uniform_pi()), NumericalError);
}

TEST(SkfViterbi, LongRecordingStaysCyclic) {
  std::mt19937_64 rng(8);
  DurationModel dm;
  dm.d_max = 60;
  dm.dP = MatrixXd::Zero(4, 60);
  for (int j = 0; j < 4; ++j) {
    for (int d = 1; d <= 60; ++d) dm.dP(j, d - 1) = std::exp(-0.5 * std::pow((d - 12.0 - 5 * j) / 4.0, 2));
    dm.dP.row(j) /= dm.dP.row(j).sum();
  }
  MatrixXd M(3000, 4);
  for (int t = 0; t < 3000; ++t) M.row(t) = random_probability_vector(4, rng).transpose();
  const auto res = skf_viterbi(M, dm, cyclic_successor_matrix(4), uniform_pi());
  for (std::size_t len : segment_lengths(res.path)) EXPECT_LE(len, 60u);
}

}  // namespace
}  // namespace hsseg::testing
