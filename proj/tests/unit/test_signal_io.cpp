#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "hsseg/error.hpp"
#include "hsseg/signal_io.hpp"
#include "oracles.hpp"

namespace hsseg::testing {
namespace {

void put_u16(std::ofstream& out, std::uint16_t v) {
  out.put(static_cast<char>(v & 0xff));
  out.put(static_cast<char>(v >> 8));
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Minimal PCM writer so channel count can be chosen freely.
void write_pcm(const std::filesystem::path& path, std::uint16_t channels, std::uint32_t rate,
               std::uint32_t frames) {
  std::ofstream out(path, std::ios::binary);
  const std::uint32_t data_len = frames * channels * 2;
  out.write("RIFF", 4);
  put_u32(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * 2);
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_len);
  for (std::uint32_t i = 0; i < frames * channels; ++i) put_u16(out, static_cast<std::uint16_t>(i % 100));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TEST(SignalIo, MonoWavHeaderArithmetic) {
  TempDir dir("sio");
  write_pcm(dir / "a.wav", 1, 2000, 4000);
  const Recording rec = load_recording(dir / "a.wav");
  EXPECT_EQ(rec.samples.size(), 4000u);
  EXPECT_EQ(rec.sample_rate, 2000);
  EXPECT_DOUBLE_EQ(rec.duration_seconds(), 2.0);
  EXPECT_EQ(rec.id, "a");
}

TEST(SignalIo, CsvFloatFiveRows) {
  TempDir dir("sio");
  write_text(dir / "r.csv", "sample_rate=1000\n0.1\n-0.2\n0.3\n0.4\n0.5\n");
  const Recording rec = load_recording(dir / "r.csv");
  ASSERT_EQ(rec.samples.size(), 5u);
  EXPECT_EQ(rec.sample_rate, 1000);
  EXPECT_DOUBLE_EQ(rec.samples[1], -0.2);
}

TEST(SignalIo, StereoWavRejected) {
  TempDir dir("sio");
  write_pcm(dir / "s.wav", 2, 2000, 100);
  EXPECT_THROW(load_recording(dir / "s.wav"), FormatError);
  EXPECT_NE(message_of([&] { load_recording(dir / "s.wav"); }).find("multi-channel unsupported"),
            std::string::npos);
}

TEST(SignalIo, CsvFormatErrorsNameTheField) {
  TempDir dir("sio");
  write_text(dir / "nohdr.csv", "0.1\n0.2\n");
  EXPECT_NE(message_of([&] { load_recording(dir / "nohdr.csv"); }).find("sample_rate"), std::string::npos);
  write_text(dir / "empty.csv", "sample_rate=1000\n");
  EXPECT_NE(message_of([&] { load_recording(dir / "empty.csv"); }).find("empty payload"), std::string::npos);
  EXPECT_THROW(load_recording(dir / "missing.csv"), ValidationError);
}

TEST(SignalIo, WavCsvRoundTrip) {
  TempDir dir("sio");
  Recording rec;
  rec.sample_rate = 1000;
  rec.id = "x";
  for (int i = 0; i < 50; ++i) rec.samples.push_back(std::sin(0.1 * i) * 0.9);
  save_recording_csv(rec, dir / "x.csv");
  const Recording csv = load_recording(dir / "x.csv");
  EXPECT_EQ(csv.samples, rec.samples);
  save_recording_wav(rec, dir / "x.wav");
  const Recording wav = load_recording(dir / "x.wav");
  ASSERT_EQ(wav.samples.size(), rec.samples.size());
  for (std::size_t i = 0; i < rec.samples.size(); ++i) EXPECT_NEAR(wav.samples[i], rec.samples[i], 1e-4);
}

TEST(SignalIo, ValidCycleLoads) {
  TempDir dir("sio");
  write_text(dir / "a.csv", "start,end,state\n0,100,1\n100,300,2\n300,400,3\n400,900,4\n");
  const AnnotationTrack t = load_annotations(dir / "a.csv");
  ASSERT_EQ(t.intervals.size(), 4u);
  EXPECT_EQ(t.intervals[3], (Interval{400, 900, 4}));
  EXPECT_EQ(t.end_sample(), 900u);
}

TEST(SignalIo, AnnotationGapNamesSample) {
  TempDir dir("sio");
  write_text(dir / "a.csv", "start,end,state\n0,100,1\n150,300,2\n");
  const std::string msg = message_of([&] { load_annotations(dir / "a.csv"); });
  EXPECT_NE(msg.find("gap at sample 100"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
}

TEST(SignalIo, AnnotationIllegalTransition) {
  TempDir dir("sio");
  write_text(dir / "a.csv", "start,end,state\n0,100,1\n100,200,3\n");
  EXPECT_THROW(load_annotations(dir / "a.csv"), ValidationError);
  const std::string msg = message_of([&] { load_annotations(dir / "a.csv"); });
  EXPECT_NE(msg.find("illegal transition 1->3"), std::string::npos) << msg;
}

TEST(SignalIo, AnnotationOverlapAndStateRange) {
  AnnotationTrack overlap{{{0, 100, 1}, {90, 200, 2}}};
  EXPECT_NE(message_of([&] { validate_track(overlap); }).find("overlap"), std::string::npos);
  AnnotationTrack bad_state{{{0, 100, 5}}};
  EXPECT_NE(message_of([&] { validate_track(bad_state); }).find("outside 1..4"), std::string::npos);
}

TEST(SignalIo, FromStatesAndExpand) {
  const StateSequence s{1, 1, 2, 3, 3, 3, 4, 1};
  const AnnotationTrack t = AnnotationTrack::from_states(s);
  ASSERT_EQ(t.intervals.size(), 5u);
  EXPECT_EQ(t.expand(), s);
  EXPECT_EQ(next_regime(4), 1);
}

class ManifestTest : public ::testing::Test {
 protected:
  TempDir dir{"manifest"};
};

TEST_F(ManifestTest, ThreeValidRows) {
  write_text(dir / "m.csv",
             "path,annotation,label,split\n"
             "a.wav,a.ann.csv,normal,train\n"
             "b.wav,,abnormal,test\n"
             "c.wav,,noise,fold-1\n");
  const DatasetManifest m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_TRUE(m.entries[0].annotation.has_value());
  EXPECT_FALSE(m.entries[1].annotation.has_value());
  EXPECT_TRUE(m.entries[2].excluded_from_segmentation());
  EXPECT_EQ(m.entries[0].recording, dir.path() / "a.wav");
  EXPECT_EQ(m.with_split("train").entries.size(), 1u);
}

TEST_F(ManifestTest, UnknownLabel) {
  write_text(dir / "m.csv", "path,annotation,label,split\na.wav,,bad,train\n");
  EXPECT_NE(message_of([&] { load_manifest(dir / "m.csv"); }).find("unknown class label"), std::string::npos);
}

TEST_F(ManifestTest, DuplicateEntry) {
  write_text(dir / "m.csv", "path,annotation,label,split\na.wav,,normal,train\na.wav,,abnormal,test\n");
  EXPECT_NE(message_of([&] { load_manifest(dir / "m.csv"); }).find("duplicate entry"), std::string::npos);
}

TEST_F(ManifestTest, QualityColumnAndRoundTrip) {
  write_text(dir / "m.csv",
             "path,annotation,label,split,quality\n"
             "a.wav,,xfactor,train,good\n"
             "b.wav,,normal,train,poor\n");
  const DatasetManifest m = load_manifest(dir / "m.csv");
  EXPECT_TRUE(m.entries[0].is_unsure());
  EXPECT_TRUE(m.entries[1].is_unsure());
  save_manifest(m, dir / "again.csv");
  const DatasetManifest again = load_manifest(dir / "again.csv");
  ASSERT_EQ(again.entries.size(), 2u);
  EXPECT_EQ(again.entries[1].quality, Quality::Poor);
  EXPECT_EQ(again.entries[0].recording, m.entries[0].recording);
}

Recording sine(double freq, int fs, std::size_t n) {
  Recording r;
  r.sample_rate = fs;
  r.id = "sine";
  for (std::size_t i = 0; i < n; ++i) r.samples.push_back(std::sin(2 * std::numbers::pi * freq * i / fs));
  return r;
}

TEST(Resample, IdentityIsBitExact) {
  const Recording r = sine(50, 1000, 777);
  EXPECT_EQ(resample(r, 1000).samples, r.samples);
}

TEST(Resample, LengthRoundsDown) {
  EXPECT_EQ(resample(sine(100, 2000, 4001), 1000).samples.size(), 2000u);
  EXPECT_EQ(resample(sine(100, 2000, 4001), 1000).sample_rate, 1000);
}

TEST(Resample, SineSurvivesDecimation) {
  const Recording out = resample(sine(100, 2000, 4000), 1000);
  // Correlate against the analytic 100 Hz sine at 1 kHz, away from the edges.
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 100; i + 100 < out.samples.size(); ++i) {
    const double ref = std::sin(2 * std::numbers::pi * 100.0 * i / 1000.0);
    sxy += out.samples[i] * ref;
    sxx += out.samples[i] * out.samples[i];
    syy += ref * ref;
  }
  EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.999);
}

TEST(Resample, UpsamplingRejected) {
  const std::string msg = message_of([] { resample(sine(10, 1000, 100), 2000); });
  EXPECT_NE(msg.find("unsupported rate"), std::string::npos) << msg;
}

}  // namespace
}  // namespace hsseg::testing
