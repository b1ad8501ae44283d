#include "hsseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "hsseg/error.hpp"
#include "hsseg/slds.hpp"
#include "text_util.hpp"

namespace hsseg {

std::string_view to_string(InferenceMethod method) {
  switch (method) {
    case InferenceMethod::Skf: return "skf";
    case InferenceMethod::Sks: return "sks";
    case InferenceMethod::SkfViterbi: return "skf-viterbi";
  }
  return "skf";
}

InferenceMethod parse_inference_method(std::string_view text) {
  if (text == "skf") return InferenceMethod::Skf;
  if (text == "sks") return InferenceMethod::Sks;
  if (text == "skf-viterbi") return InferenceMethod::SkfViterbi;
  throw ValidationError("unknown inference method '" + std::string(text) + "' (skf, sks, skf-viterbi)");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(std::string_view key, std::string_view value) {
  const auto v = detail::parse_double(value);
  if (!v) throw ValidationError("config: " + std::string(key) + " expects a number, got '" + std::string(value) + "'");
  return *v;
}

long long to_int(std::string_view key, std::string_view value) {
  const auto v = detail::parse_int(value);
  if (!v) throw ValidationError("config: " + std::string(key) + " expects an integer, got '" + std::string(value) + "'");
  return *v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config: " + std::string(key) + " expects true/false, got '" + std::string(value) + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  if (working_rate <= 0) throw ValidationError("config: signal.working_rate must be positive");
  preprocess.validate(working_rate);
  if (msar.order < 1) throw ValidationError("config: msar.order must be at least 1");
  if (!(msar.noise_window_seconds > 0.0)) throw ValidationError("config: msar.noise_window must be positive");
  if (mfcc.fs != working_rate) throw ValidationError("config: mfcc sample rate must equal signal.working_rate");
  mfcc.validate();
  if (hmm.states < 1 || hmm.mixtures < 1 || hmm.max_iter < 0 || !(hmm.tol >= 0.0) || !(hmm.var_floor > 0.0)) {
    throw ValidationError("config: invalid hmm settings");
  }
  if (folds < 2) throw ValidationError("config: eval.folds must be at least 2");
  if (!(alpha > 0.0)) throw ValidationError("config: eval.alpha must be positive");
  if (jobs < 1) throw ValidationError("config: jobs must be at least 1");
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  const std::string k(key);
  if (k == "preprocess.band_low") preprocess.band_low = to_double(key, value);
  else if (k == "preprocess.band_high") preprocess.band_high = to_double(key, value);
  else if (k == "preprocess.order") preprocess.filter_order = static_cast<int>(to_int(key, value));
  else if (k == "preprocess.spike_window") preprocess.spike_window = to_double(key, value);
  else if (k == "preprocess.spike_threshold") preprocess.spike_threshold = to_double(key, value);
  else if (k == "preprocess.normalize") preprocess.normalize = to_bool(key, value);
  else if (k == "signal.working_rate") {
    working_rate = static_cast<int>(to_int(key, value));
    mfcc.fs = working_rate;
  } else if (k == "msar.order") msar.order = static_cast<int>(to_int(key, value));
  else if (k == "msar.noise_window") msar.noise_window_seconds = to_double(key, value);
  else if (k == "msar.shared_noise") msar.shared_obs_noise = to_bool(key, value);
  else if (k == "msar.boundary_lags") msar.boundary_lags = to_bool(key, value);
  else if (k == "msar.weighted_pool") weighted_pool = to_bool(key, value);
  else if (k == "mfcc.frame_ms") mfcc.frame_ms = to_double(key, value);
  else if (k == "mfcc.hop_ms") mfcc.hop_ms = to_double(key, value);
  else if (k == "mfcc.preemphasis") mfcc.preemphasis = to_double(key, value);
  else if (k == "mfcc.n_mel") mfcc.n_mel = static_cast<int>(to_int(key, value));
  else if (k == "mfcc.n_coef") mfcc.n_coef = static_cast<int>(to_int(key, value));
  else if (k == "mfcc.fft_size") mfcc.fft_size = static_cast<int>(to_int(key, value));
  else if (k == "hmm.states") hmm.states = static_cast<int>(to_int(key, value));
  else if (k == "hmm.mixtures") hmm.mixtures = static_cast<int>(to_int(key, value));
  else if (k == "hmm.max_iter") hmm.max_iter = static_cast<int>(to_int(key, value));
  else if (k == "hmm.tol") hmm.tol = to_double(key, value);
  else if (k == "hmm.var_floor") hmm.var_floor = to_double(key, value);
  else if (k == "hmm.realign_rounds") hmm.realign_rounds = static_cast<int>(to_int(key, value));
  else if (k == "segment.method") method = parse_inference_method(value);
  else if (k == "seed") {
    seed = static_cast<std::uint64_t>(to_int(key, value));
    hmm.seed = static_cast<unsigned>(seed);
  } else if (k == "eval.folds") folds = static_cast<int>(to_int(key, value));
  else if (k == "eval.alpha") alpha = to_double(key, value);
  else if (k == "paths.models") model_dir = std::string(value);
  else if (k == "paths.output") output_dir = std::string(value);
  else if (k == "jobs") jobs = static_cast<int>(to_int(key, value));
  else throw ValidationError("config: unknown key '" + k + "'");
}

std::map<std::string, std::string> PipelineConfig::to_map() const {
  return {
      {"preprocess.band_low", fmt(preprocess.band_low)},
      {"preprocess.band_high", fmt(preprocess.band_high)},
      {"preprocess.order", std::to_string(preprocess.filter_order)},
      {"preprocess.spike_window", fmt(preprocess.spike_window)},
      {"preprocess.spike_threshold", fmt(preprocess.spike_threshold)},
      {"preprocess.normalize", preprocess.normalize ? "true" : "false"},
      {"signal.working_rate", std::to_string(working_rate)},
      {"msar.order", std::to_string(msar.order)},
      {"msar.noise_window", fmt(msar.noise_window_seconds)},
      {"msar.shared_noise", msar.shared_obs_noise ? "true" : "false"},
      {"msar.boundary_lags", msar.boundary_lags ? "true" : "false"},
      {"msar.weighted_pool", weighted_pool ? "true" : "false"},
      {"mfcc.frame_ms", fmt(mfcc.frame_ms)},
      {"mfcc.hop_ms", fmt(mfcc.hop_ms)},
      {"mfcc.preemphasis", fmt(mfcc.preemphasis)},
      {"mfcc.n_mel", std::to_string(mfcc.n_mel)},
      {"mfcc.n_coef", std::to_string(mfcc.n_coef)},
      {"mfcc.fft_size", std::to_string(mfcc.fft_size)},
      {"hmm.states", std::to_string(hmm.states)},
      {"hmm.mixtures", std::to_string(hmm.mixtures)},
      {"hmm.max_iter", std::to_string(hmm.max_iter)},
      {"hmm.tol", fmt(hmm.tol)},
      {"hmm.var_floor", fmt(hmm.var_floor)},
      {"hmm.realign_rounds", std::to_string(hmm.realign_rounds)},
      {"segment.method", std::string(to_string(method))},
      {"seed", std::to_string(seed)},
      {"eval.folds", std::to_string(folds)},
      {"eval.alpha", fmt(alpha)},
      {"paths.models", model_dir.string()},
      {"paths.output", output_dir.string()},
      {"jobs", std::to_string(jobs)},
  };
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  PipelineConfig cfg;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    const std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(path.string() + ": line " + std::to_string(row) + ": expected key = value");
    }
    try {
      cfg.set(detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
    } catch (const ValidationError& err) {
      throw ValidationError(path.string() + ": line " + std::to_string(row) + ": " + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& [k, v] : cfg.to_map()) out << k << " = " << v << '\n';
}

Recording prepare_recording(const Recording& raw, const PipelineConfig& cfg) {
  validate_recording(raw);
  if (raw.sample_rate < cfg.working_rate) {
    throw ValidationError("recording '" + raw.id + "' is sampled at " + std::to_string(raw.sample_rate) +
                          " Hz, below the working rate " + std::to_string(cfg.working_rate));
  }
  return preprocess_recording(resample(raw, cfg.working_rate), cfg.preprocess);
}

AnnotationTrack rescale_track(const AnnotationTrack& track, int from_rate, int to_rate, std::size_t length) {
  if (from_rate <= 0 || to_rate <= 0) throw ValidationError("rescale_track: rates must be positive");
  auto map = [&](std::size_t s) {
    const auto v = static_cast<std::size_t>(std::llround(static_cast<double>(s) * to_rate / from_rate));
    return std::min(v, length);
  };
  AnnotationTrack out;
  for (const auto& iv : track.intervals) {
    const std::size_t a = map(iv.start);
    const std::size_t b = map(iv.end);
    if (b <= a) {
      if (!out.intervals.empty()) out.intervals.back().end = std::max(out.intervals.back().end, b);
      continue;
    }
    if (!out.intervals.empty() && out.intervals.back().state == iv.state) {
      out.intervals.back().end = b;
    } else {
      out.intervals.push_back({a, b, iv.state});
    }
  }
  return out;
}

nlohmann::json to_json(const SegmenterModel& model) {
  return {{"schema_version", 1},
          {"sample_rate", model.sample_rate},
          {"msar", to_json(model.params)},
          {"durations", to_json(model.durations)}};
}

SegmenterModel segmenter_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != 1) throw FormatError("unsupported segmenter schema_version");
    SegmenterModel m;
    m.sample_rate = doc.at("sample_rate").get<int>();
    m.params = msar_from_json(doc.at("msar"));
    m.durations = duration_stats_from_json(doc.at("durations"));
    return m;
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("segmenter model: ") + err.what());
  }
}

SegmenterModel train_segmenter(std::span<const Recording> prepared, std::span<const AnnotationTrack> tracks,
                               const PipelineConfig& cfg) {
  if (prepared.empty()) throw ValidationError("segmenter training: no training recordings");
  if (prepared.size() != tracks.size()) throw ValidationError("segmenter training: recordings and tracks differ in number");
  std::vector<MsarParams> fits(prepared.size());
  std::vector<double> weights(prepared.size());
  parallel_for(prepared.size(), cfg.jobs, [&](std::size_t i) {
    try {
      fits[i] = fit_msar(prepared[i], tracks[i], cfg.msar);
    } catch (const ValidationError& err) {
      throw ValidationError("recording '" + prepared[i].id + "': " + err.what());
    } catch (const NumericalError& err) {
      throw NumericalError("recording '" + prepared[i].id + "': " + err.what());
    }
    weights[i] = static_cast<double>(prepared[i].samples.size());
  });
  SegmenterModel model;
  model.sample_rate = cfg.working_rate;
  model.params = cfg.weighted_pool ? pool_parameters(fits, weights) : pool_parameters(fits);
  model.durations = duration_stats_from_tracks(tracks, cfg.working_rate);
  return model;
}

SegmentationResult segment_recording(const Recording& prepared, const SegmenterModel& model,
                                     InferenceMethod method) {
  if (prepared.sample_rate != model.sample_rate) {
    throw ValidationError("recording '" + prepared.id + "' is at " + std::to_string(prepared.sample_rate) +
                          " Hz but the segmenter was trained at " + std::to_string(model.sample_rate));
  }
  const StateSpaceView ssv = to_state_space(model.params);
  SkfOptions opts;
  opts.sample_rate = prepared.sample_rate;
  const FilteredTrajectory fwd = skf(prepared.samples, ssv, model.params.Z, opts);
  SegmentationResult out;
  out.recovered_steps = fwd.recovered_steps.size();
  switch (method) {
    case InferenceMethod::Skf:
      out.M = fwd.M;
      out.states = decode_map_states(fwd.M);
      break;
    case InferenceMethod::Sks: {
      SmoothedTrajectory sm = sks(fwd, ssv, model.params.Z);
      out.M = std::move(sm.M);
      out.states = decode_map_states(out.M);
      break;
    }
    case InferenceMethod::SkfViterbi: {
      const HeartRateEstimate hr = estimate_heart_rate(prepared.samples, prepared.sample_rate);
      const DurationModel dm = build_duration_model(hr, model.durations, prepared.sample_rate);
      const int k = model.params.K;
      const Eigen::VectorXd pi0 = Eigen::VectorXd::Constant(k, 1.0 / k);
      out.M = fwd.M;
      out.states = skf_viterbi(fwd.M, dm, cyclic_successor_matrix(k), pi0).path;
      out.heart_rate = hr;
      break;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> beat_bounds(const StateSequence& states) {
  std::vector<std::size_t> onsets;
  for (std::size_t t = 1; t < states.size(); ++t) {
    if (states[t] == 1 && states[t - 1] != 1) onsets.push_back(t);
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i + 1 < onsets.size(); ++i) out.emplace_back(onsets[i], onsets[i + 1]);
  return out;
}

std::vector<BeatSegment> beat_features(const Recording& prepared, const StateSequence& states,
                                       const MfccConfig& cfg, ClassLabel label) {
  if (states.size() > prepared.samples.size()) {
    throw ValidationError("beat_features: segmentation longer than recording '" + prepared.id + "'");
  }
  std::vector<BeatSegment> out;
  const std::span<const double> x(prepared.samples);
  for (const auto& [start, end] : beat_bounds(states)) {
    if (end - start < cfg.frame_length()) continue;
    BeatSegment seg;
    seg.recording_id = prepared.id;
    seg.label = label;
    seg.start = start;
    seg.end = end;
    seg.features = extract_mfcc(x.subspan(start, end - start), cfg, prepared.id + ":" + std::to_string(out.size()));
    out.push_back(std::move(seg));
  }
  return out;
}

ClassifierBank train_classifier(const std::map<ClassLabel, std::vector<FeatureSequence>>& data,
                                const PipelineConfig& cfg, std::vector<ClassTrainingLog>* log) {
  ClassifierBank bank;
  bank.features = cfg.mfcc;
  std::vector<std::pair<ClassLabel, const std::vector<FeatureSequence>*>> jobs;
  for (const auto& [label, seqs] : data) {
    if (seqs.empty()) continue;
    jobs.emplace_back(label, &seqs);
  }
  if (jobs.empty()) throw ValidationError("classifier training: no training beats");
  std::vector<HmmParams> models(jobs.size());
  std::vector<ClassTrainingLog> logs(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto& [label, seqs] = jobs[i];
    auto& lg = logs[i];
    lg.label = label;
    lg.sequences = seqs->size();
    try {
      const HmmParams init = segmental_kmeans_init(*seqs, cfg.hmm, &lg.warnings);
      models[i] = baum_welch_train(init, *seqs, cfg.hmm, &lg.report);
    } catch (const ValidationError& err) {
      throw ValidationError(std::string(to_string(label)) + " model: " + err.what());
    } catch (const NumericalError& err) {
      throw NumericalError(std::string(to_string(label)) + " model: " + err.what());
    }
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) bank.models.emplace(jobs[i].first, std::move(models[i]));
  if (log != nullptr) *log = std::move(logs);
  return bank;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const auto workers = static_cast<std::size_t>(std::clamp<long long>(jobs, 1, static_cast<long long>(n)));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hsseg
