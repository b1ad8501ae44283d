#include "hsseg/signal_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "hsseg/error.hpp"
#include "text_util.hpp"

namespace hsseg {

namespace fs = std::filesystem;

void validate_recording(const Recording& rec) {
  if (rec.sample_rate <= 0) {
    throw ValidationError("recording '" + rec.id +
                          "': sample_rate must be positive");
  }
  if (rec.samples.empty()) {
    throw ValidationError("recording '" + rec.id + "': no samples");
  }
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    if (!std::isfinite(rec.samples[i])) {
      throw ValidationError("recording '" + rec.id +
                            "': non-finite sample at index " +
                            std::to_string(i));
    }
  }
}

RecordingFormat format_from_path(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav" ? RecordingFormat::Wav16Mono : RecordingFormat::CsvFloat;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff)};
  os.write(b.data(), 2);
}

Recording load_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& what) {
    throw FormatError(path.string() + ": " + what);
  };
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    fail("malformed header: missing RIFF/WAVE tag");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string tag(bytes.begin() + pos, bytes.begin() + pos + 4);
    const std::size_t len = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Truncated trailing chunk; accept what is present for data.
      if (tag != "data") fail("malformed header: truncated '" + tag + "' chunk");
    }
    if (tag == "fmt ") {
      if (len < 16) fail("malformed header: fmt chunk too short");
      const std::uint16_t audio_format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      rate = read_u32(&bytes[body + 4]);
      bits = read_u16(&bytes[body + 14]);
      if (audio_format != 1) fail("unsupported audio_format (PCM required)");
      have_fmt = true;
    } else if (tag == "data") {
      data = &bytes[body];
      data_len = std::min(len, bytes.size() - body);
    }
    pos = body + len + (len & 1U);
  }
  if (!have_fmt) fail("malformed header: missing fmt chunk");
  if (channels != 1) fail("multi-channel unsupported (channels=" +
                          std::to_string(channels) + ")");
  if (bits != 16) fail("unsupported bits_per_sample=" + std::to_string(bits));
  if (rate == 0) fail("malformed header: sample_rate=0");
  if (data == nullptr || data_len < 2) fail("empty payload: no data samples");

  Recording rec;
  rec.id = path.stem().string();
  rec.sample_rate = static_cast<int>(rate);
  rec.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
    rec.samples[i] = raw / 32768.0;
  }
  return rec;
}

Recording load_csv_float(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Recording rec;
  rec.id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      constexpr std::string_view key = "sample_rate=";
      if (text.substr(0, key.size()) != key) {
        throw FormatError(path.string() +
                          ": malformed header: expected 'sample_rate=<int>'");
      }
      const auto rate = detail::parse_int(text.substr(key.size()));
      if (!rate || *rate <= 0) {
        throw FormatError(path.string() + ": malformed header: sample_rate");
      }
      rec.sample_rate = static_cast<int>(*rate);
      have_header = true;
      continue;
    }
    const auto v = detail::parse_double(text);
    if (!v) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        ": sample is not a number");
    }
    rec.samples.push_back(*v);
  }
  if (!have_header) throw FormatError(path.string() + ": malformed header: missing sample_rate");
  if (rec.samples.empty()) throw FormatError(path.string() + ": empty payload");
  return rec;
}

}  // namespace

Recording load_recording(const fs::path& path, RecordingFormat format) {
  if (!fs::exists(path)) throw ValidationError("no such file: " + path.string());
  Recording rec = format == RecordingFormat::Wav16Mono ? load_wav(path)
                                                       : load_csv_float(path);
  validate_recording(rec);
  return rec;
}

void save_recording_csv(const Recording& rec, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "sample_rate=" << rec.sample_rate << '\n';
  out.precision(17);
  for (double v : rec.samples) out << v << '\n';
}

void save_recording_wav(const Recording& rec, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(rec.samples.size());
  out.write("RIFF", 4);
  put_u32(out, 36 + 2 * n);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(rec.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(rec.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, 2 * n);
  for (double v : rec.samples) {
    const double c = std::clamp(v, -1.0, 1.0);
    put_u16(out, static_cast<std::uint16_t>(
                     static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

StateSequence AnnotationTrack::expand() const {
  StateSequence out;
  out.reserve(end_sample() - begin_sample());
  for (const auto& iv : intervals) out.insert(out.end(), iv.length(), iv.state);
  return out;
}

AnnotationTrack AnnotationTrack::from_states(const StateSequence& states) {
  AnnotationTrack track;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= states.size(); ++t) {
    if (t == states.size() || states[t] != states[start]) {
      track.intervals.push_back({start, t, states[start]});
      start = t;
    }
  }
  return track;
}

void validate_track(const AnnotationTrack& track) {
  if (track.intervals.empty()) throw ValidationError("annotation track is empty");
  for (std::size_t r = 0; r < track.intervals.size(); ++r) {
    const auto& iv = track.intervals[r];
    const std::string row = "row " + std::to_string(r + 1) + ": ";
    if (iv.state < 1 || iv.state > kNumRegimes) {
      throw ValidationError(row + "state " + std::to_string(iv.state) +
                            " outside 1..4");
    }
    if (iv.end <= iv.start) throw ValidationError(row + "end must exceed start");
    if (r == 0) continue;
    const auto& prev = track.intervals[r - 1];
    if (iv.start > prev.end) {
      throw ValidationError(row + "gap at sample " + std::to_string(prev.end));
    }
    if (iv.start < prev.end) {
      throw ValidationError(row + "overlap at sample " + std::to_string(iv.start));
    }
    if (iv.state != next_regime(prev.state)) {
      throw ValidationError(row + "illegal transition " +
                            std::to_string(prev.state) + "->" +
                            std::to_string(iv.state));
    }
  }
}

AnnotationTrack load_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  AnnotationTrack track;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cols = detail::split_csv(text);
    if (line_no == 1 && !cols.empty() && cols[0] == "start") continue;
    if (cols.size() != 3) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        ": expected start,end,state");
    }
    const auto s = detail::parse_int(cols[0]);
    const auto e = detail::parse_int(cols[1]);
    const auto k = detail::parse_int(cols[2]);
    if (!s || !e || !k || *s < 0 || *e < 0) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        ": non-integer field");
    }
    track.intervals.push_back({static_cast<std::size_t>(*s),
                               static_cast<std::size_t>(*e),
                               static_cast<int>(*k)});
  }
  try {
    validate_track(track);
  } catch (const ValidationError& err) {
    throw ValidationError(path.string() + ": " + err.what());
  }
  return track;
}

void save_annotations(const AnnotationTrack& track, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "start,end,state\n";
  for (const auto& iv : track.intervals) {
    out << iv.start << ',' << iv.end << ',' << iv.state << '\n';
  }
}

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::Normal: return "normal";
    case ClassLabel::Abnormal: return "abnormal";
    case ClassLabel::XFactor: return "xfactor";
    case ClassLabel::Noise: return "noise";
  }
  return "?";
}

ClassLabel parse_class_label(std::string_view text) {
  if (text == "normal") return ClassLabel::Normal;
  if (text == "abnormal") return ClassLabel::Abnormal;
  if (text == "xfactor") return ClassLabel::XFactor;
  if (text == "noise") return ClassLabel::Noise;
  throw ValidationError("unknown class label '" + std::string(text) + "'");
}

std::string_view to_string(Quality quality) {
  return quality == Quality::Good ? "good" : "poor";
}

Quality parse_quality(std::string_view text) {
  if (text.empty() || text == "good") return Quality::Good;
  if (text == "poor") return Quality::Poor;
  throw ValidationError("unknown quality '" + std::string(text) + "'");
}

DatasetManifest DatasetManifest::with_split(std::string_view split) const {
  DatasetManifest out;
  for (const auto& e : entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const auto resolve = [&](std::string_view p) {
    fs::path q{std::string(p)};
    return q.is_absolute() ? q : (base / q).lexically_normal();
  };

  DatasetManifest manifest;
  std::set<fs::path> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cols = detail::split_csv(text);
    const std::string where = path.string() + ": line " + std::to_string(line_no) + ": ";
    if (!header) {
      if (cols.size() < 4 || cols[0] != "path" || cols[1] != "annotation" ||
          cols[2] != "label" || cols[3] != "split") {
        throw FormatError(where + "expected header path,annotation,label,split");
      }
      header = true;
      continue;
    }
    if (cols.size() < 4 || cols.size() > 5) {
      throw FormatError(where + "expected 4 or 5 columns");
    }
    ManifestEntry entry;
    entry.recording = resolve(cols[0]);
    if (!cols[1].empty()) entry.annotation = resolve(cols[1]);
    try {
      entry.label = parse_class_label(cols[2]);
      entry.quality = cols.size() == 5 ? parse_quality(cols[4]) : Quality::Good;
    } catch (const ValidationError& err) {
      throw ValidationError(where + err.what());
    }
    entry.split = std::string(cols[3]);
    if (entry.split.empty()) throw ValidationError(where + "empty split tag");
    if (!seen.insert(entry.recording).second) {
      throw ValidationError(where + "duplicate entry '" + std::string(cols[0]) + "'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!header) throw FormatError(path.string() + ": missing header");
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "path,annotation,label,split,quality\n";
  for (const auto& e : manifest.entries) {
    out << e.recording.string() << ','
        << (e.annotation ? e.annotation->string() : std::string()) << ','
        << to_string(e.label) << ',' << e.split << ',' << to_string(e.quality)
        << '\n';
  }
}

namespace {

// Kaiser-windowed sinc low-pass with unit DC gain; cutoff is relative to the
// Nyquist rate of the upsampled stream.
std::vector<double> design_antialias(double cutoff, std::size_t half_len,
                                     double beta) {
  const std::size_t n = 2 * half_len + 1;
  std::vector<double> h(n);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  for (std::size_t k = 0; k < n; ++k) {
    const double m = static_cast<double>(k) - static_cast<double>(half_len);
    const double x = cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    const double r = m / static_cast<double>(half_len);
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[k] = cutoff * sinc * w;
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

Recording resample(const Recording& rec, int target_rate) {
  validate_recording(rec);
  if (target_rate <= 0) throw ValidationError("target_rate must be positive");
  if (target_rate > rec.sample_rate) {
    throw ValidationError("unsupported rate: upsampling " +
                          std::to_string(rec.sample_rate) + " -> " +
                          std::to_string(target_rate) + " Hz");
  }
  if (target_rate == rec.sample_rate) return rec;

  const int g = std::gcd(target_rate, rec.sample_rate);
  const std::size_t up = static_cast<std::size_t>(target_rate / g);
  const std::size_t down = static_cast<std::size_t>(rec.sample_rate / g);
  const std::size_t max_rate = std::max(up, down);
  const std::size_t half_len = 10 * max_rate;
  auto h = design_antialias(1.0 / static_cast<double>(max_rate), half_len, 5.0);
  for (double& v : h) v *= static_cast<double>(up);

  const std::size_t n_in = rec.samples.size();
  const std::size_t n_out = n_in * up / down;
  Recording out;
  out.id = rec.id;
  out.sample_rate = target_rate;
  out.samples.assign(n_out, 0.0);
  const auto len = static_cast<long long>(h.size());
  for (std::size_t k = 0; k < n_out; ++k) {
    // y[k] = sum_j h[k*down + half_len - j*up] x[j]
    const long long centre = static_cast<long long>(k * down + half_len);
    const long long up_ll = static_cast<long long>(up);
    long long j_lo = (centre - (len - 1) + up_ll - 1) / up_ll;
    if (centre - (len - 1) < 0) j_lo = 0;
    const long long j_hi =
        std::min<long long>(centre / up_ll, static_cast<long long>(n_in) - 1);
    double acc = 0.0;
    for (long long j = std::max<long long>(j_lo, 0); j <= j_hi; ++j) {
      acc += h[static_cast<std::size_t>(centre - j * up_ll)] *
             rec.samples[static_cast<std::size_t>(j)];
    }
    out.samples[k] = acc;
  }
  return out;
}

}  // namespace hsseg
