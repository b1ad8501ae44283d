#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hsseg/error.hpp"
#include "hsseg/mfcc.hpp"
#include "oracles.hpp"

namespace hsseg::testing {
namespace {

MfccConfig at_2khz() {
  MfccConfig cfg;
  cfg.fs = 2000;
  return cfg;
}

std::vector<double> noise(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

TEST(Framing, FrameCount) {
  const MfccConfig cfg = at_2khz();
  EXPECT_EQ(cfg.frame_length(), 100u);
  EXPECT_EQ(cfg.hop_length(), 20u);
  EXPECT_EQ(cfg.nfft(), 256u);
  EXPECT_EQ(frame_signal(noise(2000, 1), cfg).rows(), 96);
  EXPECT_EQ(frame_signal(noise(100, 1), cfg).rows(), 1);
  EXPECT_THROW(frame_signal(noise(99, 1), cfg), ValidationError);
}

TEST(Framing, ConstantInputIsScaledHamming) {
  const MfccConfig cfg = at_2khz();
  const std::vector<double> x(300, 2.0);
  const Eigen::MatrixXd frames = frame_signal(x, cfg);
  const auto L = static_cast<double>(cfg.frame_length());
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    for (Eigen::Index n = 0; n < frames.cols(); ++n) {
      const double hamming = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * n / (L - 1));
      EXPECT_NEAR(frames(f, n), 0.03 * 2.0 * hamming, 1e-12);
    }
  }
}

TEST(Mel, ScaleAndFilterbank) {
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 0.1);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(321.0)), 321.0, 1e-9);
  const MfccConfig cfg = at_2khz();
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  EXPECT_EQ(fb.rows(), 24);
  EXPECT_EQ(fb.cols(), 129);
  EXPECT_GE(fb.minCoeff(), 0.0);
  EXPECT_LE(fb.maxCoeff(), 1.0);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) EXPECT_GT(fb.row(m).sum(), 0.0) << m;
}

TEST(Mfcc, ShapeAndFinite) {
  const auto feats = extract_mfcc(noise(2000, 2), at_2khz(), "seg");
  EXPECT_EQ(feats.size(), 96);
  EXPECT_EQ(feats.dim(), 12);
  EXPECT_EQ(feats.id, "seg");
  EXPECT_TRUE(feats.frames.allFinite());
}

TEST(Mfcc, GainOnlyMovesTheDroppedCoefficient) {
  const auto x = noise(2000, 3);
  std::vector<double> loud(x);
  for (double& v : loud) v *= 10.0;
  const auto a = extract_mfcc(x, at_2khz());
  const auto b = extract_mfcc(loud, at_2khz());
  EXPECT_LT((a.frames - b.frames).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mfcc, ToneMatchesDirectEvaluation) {
  const MfccConfig cfg = at_2khz();
  std::vector<double> x(2000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * 200.0 * i / cfg.fs);
  const auto got = extract_mfcc(x, cfg);
  const Eigen::MatrixXd want = reference_mfcc(x, cfg);
  ASSERT_EQ(got.frames.rows(), want.rows());
  ASSERT_EQ(got.frames.cols(), want.cols());
  EXPECT_LT((got.frames - want).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mfcc, ToneEnergyInBandsAround200Hz) {
  const MfccConfig cfg = at_2khz();
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const double bin_hz = cfg.fs / static_cast<double>(cfg.nfft());
  const auto bin = static_cast<Eigen::Index>(std::lround(200.0 / bin_hz));
  // Only the filters whose support covers 200 Hz respond to that bin.
  int covering = 0;
  for (Eigen::Index m = 0; m < fb.rows(); ++m) covering += fb(m, bin) > 0.0;
  EXPECT_GE(covering, 1);
  EXPECT_LE(covering, 2);
}

TEST(Mfcc, ZeroSignalSitsAtFloor) {
  const auto feats = extract_mfcc(std::vector<double>(400, 0.0), at_2khz());
  EXPECT_TRUE(feats.frames.allFinite());
  // Every log energy equals log(floor); the DCT of a constant has no AC terms.
  EXPECT_LT(feats.frames.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mfcc, HopShift) {
  const MfccConfig cfg = at_2khz();
  const auto x = noise(3000, 4);
  const std::vector<double> shifted(x.begin() + static_cast<long>(cfg.hop_length()), x.end());
  const auto a = extract_mfcc(x, cfg);
  const auto b = extract_mfcc(shifted, cfg);
  for (Eigen::Index f = 0; f + 1 < a.size() && f < b.size(); ++f) {
    EXPECT_LT((a.frames.row(f + 1) - b.frames.row(f)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Mfcc, ConfigValidation) {
  MfccConfig cfg;
  cfg.n_mel = 19;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = MfccConfig{};
  cfg.hop_ms = 60;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = MfccConfig{};
  cfg.hop_ms = 40;  // the alternative reading of the frame overlap
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Mfcc, FeatureCacheRoundTrip) {
  TempDir dir("mfcc");
  const auto feats = extract_mfcc(noise(1500, 5), at_2khz(), "beat-7");
  write_feature_csv(feats, 2000, dir / "f.csv");
  const auto back = read_feature_csv(dir / "f.csv");
  EXPECT_EQ(back.id, "beat-7");
  EXPECT_EQ(back.frames, feats.frames);
}

}  // namespace
}  // namespace hsseg::testing
