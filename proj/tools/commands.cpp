#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "hsseg/error.hpp"
#include "hsseg/slds.hpp"
#include "hsseg/synth.hpp"

namespace hsseg::tools {

namespace {

constexpr const char* kSegmenterFile = "segmenter.json";
constexpr const char* kClassifierFile = "classifier.json";

template <class Fn>
auto with_context(const std::string& id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError& err) {
    throw NumericalError("'" + id + "': " + err.what());
  } catch (const ValidationError& err) {
    throw ValidationError("'" + id + "': " + err.what());
  }
}

void write_json(const nlohmann::json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
}

DatasetManifest load_nonempty(const fs::path& path) {
  if (path.empty()) throw ValidationError("no manifest given");
  DatasetManifest m = load_manifest(path);
  if (m.entries.empty()) throw ValidationError("manifest " + path.string() + ": no entries");
  return m;
}

void prepare_output(const PipelineConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  save_config(cfg, cfg.output_dir / "config.resolved.txt");
}

struct LoadedEntry {
  ManifestEntry entry;
  Recording prepared;
  std::optional<AnnotationTrack> track;  // at the working rate
};

LoadedEntry load_entry(const ManifestEntry& e, const PipelineConfig& cfg) {
  return with_context(e.id(), [&] {
    LoadedEntry out;
    out.entry = e;
    Recording raw = load_recording(e.recording);
    raw.id = e.id();
    out.prepared = prepare_recording(raw, cfg);
    if (e.annotation) {
      const AnnotationTrack t = load_annotations(*e.annotation);
      validate_track(t);
      out.track = rescale_track(t, raw.sample_rate, cfg.working_rate, out.prepared.samples.size());
    }
    return out;
  });
}

std::vector<LoadedEntry> load_entries(const std::vector<ManifestEntry>& entries, const PipelineConfig& cfg) {
  std::vector<LoadedEntry> out(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) { out[i] = load_entry(entries[i], cfg); });
  return out;
}

std::vector<ManifestEntry> segmentable(const std::vector<ManifestEntry>& entries) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (!e.excluded_from_segmentation()) out.push_back(e);
  }
  return out;
}

/// Entries to run inference on: the test split, or everything when the
/// manifest has no test split.
std::vector<ManifestEntry> evaluation_entries(const DatasetManifest& m) {
  auto test = m.with_split("test").entries;
  return test.empty() ? m.entries : test;
}

SegmenterModel train_segmenter_from(const DatasetManifest& manifest, const PipelineConfig& cfg, std::ostream& log) {
  const auto train = segmentable(manifest.with_split("train").entries);
  if (train.empty()) {
    throw ValidationError("no trained segmenter in " + cfg.model_dir.string() +
                          " and the manifest has no train split; run `train --target segmenter` first");
  }
  for (const auto& e : train) {
    if (!e.annotation) {
      throw ValidationError("segmenter training needs annotations; entry '" + e.id() + "' has none");
    }
  }
  const auto loaded = load_entries(train, cfg);
  std::vector<Recording> recs;
  std::vector<AnnotationTrack> tracks;
  for (const auto& l : loaded) {
    recs.push_back(l.prepared);
    tracks.push_back(*l.track);
  }
  SegmenterModel model = train_segmenter(recs, tracks, cfg);
  log << "segmenter trained on " << recs.size() << " recording(s)\n";
  return model;
}

SegmenterModel obtain_segmenter(const DatasetManifest& manifest, const PipelineConfig& cfg, std::ostream& log) {
  const fs::path path = cfg.model_dir / kSegmenterFile;
  if (fs::exists(path)) {
    SegmenterModel m = segmenter_from_json(read_json(path));
    if (m.sample_rate != cfg.working_rate) {
      throw ValidationError(path.string() + " was trained at " + std::to_string(m.sample_rate) +
                            " Hz; signal.working_rate is " + std::to_string(cfg.working_rate));
    }
    return m;
  }
  return train_segmenter_from(manifest, cfg, log);
}

std::string write_track_name(const std::string& id) { return id + ".seg.csv"; }

/// Reference states over the annotated span, and the matching predicted span.
std::pair<StateSequence, StateSequence> aligned_spans(const StateSequence& pred, const AnnotationTrack& track) {
  const std::size_t begin = std::min(track.begin_sample(), pred.size());
  const std::size_t end = std::min(track.end_sample(), pred.size());
  StateSequence ref = track.expand();
  ref.resize(end - begin);
  return {ref, StateSequence(pred.begin() + static_cast<std::ptrdiff_t>(begin),
                             pred.begin() + static_cast<std::ptrdiff_t>(end))};
}

void write_seg_reports(const std::vector<RecordingSegResult>& rows, const fs::path& stem) {
  {
    std::ofstream out(stem.string() + ".csv");
    if (!out) throw ValidationError("cannot write " + stem.string() + ".csv");
    write_seg_report_csv(rows, out);
  }
  std::ofstream out(stem.string() + ".txt");
  if (!out) throw ValidationError("cannot write " + stem.string() + ".txt");
  write_seg_report_table(rows, out);
}

/// Beat boundaries from the annotation when present, else from the segmenter.
StateSequence beat_source(const LoadedEntry& l, const std::optional<SegmenterModel>& segmenter) {
  if (l.track) {
    StateSequence s(l.track->begin_sample(), 0);
    const auto ex = l.track->expand();
    s.insert(s.end(), ex.begin(), ex.end());
    return s;
  }
  if (!segmenter) {
    throw ValidationError("no annotation and no trained segmenter to locate beats");
  }
  return segment_recording(l.prepared, *segmenter, InferenceMethod::SkfViterbi).states;
}

bool needs_segmenter(const std::vector<ManifestEntry>& entries) {
  return std::any_of(entries.begin(), entries.end(), [](const ManifestEntry& e) { return !e.annotation; });
}

std::optional<SegmenterModel> optional_segmenter(const DatasetManifest& manifest,
                                                 const std::vector<ManifestEntry>& entries,
                                                 const PipelineConfig& cfg, std::ostream& log) {
  if (!needs_segmenter(entries)) return std::nullopt;
  return obtain_segmenter(manifest, cfg, log);
}

std::string fmt_score(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

ClassifierBank train_classifier_from(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                     std::ostream& log, std::vector<ClassTrainingLog>* training_log) {
  std::vector<ManifestEntry> train;
  for (const auto& e : manifest.with_split("train").entries) {
    if (e.label != ClassLabel::Noise) train.push_back(e);
  }
  if (train.empty()) {
    throw ValidationError("no trained classifier in " + cfg.model_dir.string() +
                          " and the manifest has no train split; run `train --target classifier` first");
  }
  const auto segmenter = optional_segmenter(manifest, train, cfg, log);
  const auto loaded = load_entries(train, cfg);
  std::vector<std::vector<BeatSegment>> beats(loaded.size());
  parallel_for(loaded.size(), cfg.jobs, [&](std::size_t i) {
    const auto& l = loaded[i];
    beats[i] = with_context(l.entry.id(), [&] {
      auto b = beat_features(l.prepared, beat_source(l, segmenter), cfg.mfcc, l.entry.label);
      if (b.empty() && l.entry.is_unsure()) b = window_xfactor(l.prepared, cfg.mfcc);
      return b;
    });
  });
  std::map<ClassLabel, std::vector<FeatureSequence>> data;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& e = loaded[i].entry;
    for (const auto& b : beats[i]) {
      if (e.label == ClassLabel::Normal || e.label == ClassLabel::Abnormal) data[e.label].push_back(b.features);
      if (e.is_unsure()) data[ClassLabel::XFactor].push_back(b.features);
    }
  }
  for (const auto& [label, seqs] : data) {
    log << "training " << to_string(label) << " model on " << seqs.size() << " beat(s)\n";
  }
  return train_classifier(data, cfg, training_log);
}

ClassifierBank obtain_classifier(const DatasetManifest& manifest, const PipelineConfig& cfg, std::ostream& log) {
  const fs::path path = cfg.model_dir / kClassifierFile;
  if (fs::exists(path)) return classifier_bank_from_json(read_json(path));
  return train_classifier_from(manifest, cfg, log, nullptr);
}

}  // namespace

PipelineConfig resolve_config(const CommonOptions& common) {
  PipelineConfig cfg = common.config ? load_config(*common.config) : PipelineConfig{};
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.jobs) cfg.jobs = *common.jobs;
  if (common.output_dir) cfg.output_dir = *common.output_dir;
  if (common.model_dir) cfg.model_dir = *common.model_dir;
  cfg.validate();
  return cfg;
}

IngestResult cmd_ingest(const CommonOptions& common, std::optional<int> kfold, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  const DatasetManifest manifest = load_nonempty(common.manifest);
  IngestResult res;
  std::map<std::string, std::size_t> labels;
  std::map<std::string, std::size_t> splits;
  std::vector<int> annotated(manifest.entries.size(), 0);
  parallel_for(manifest.entries.size(), cfg.jobs, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    with_context(e.id(), [&] {
      validate_recording(load_recording(e.recording));
      if (e.annotation) {
        validate_track(load_annotations(*e.annotation));
        annotated[i] = 1;
      }
      return 0;
    });
  });
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    ++labels[std::string(to_string(e.label))];
    ++splits[e.split];
    res.annotated += static_cast<std::size_t>(annotated[i]);
  }
  res.entries = manifest.entries.size();
  res.per_label.assign(labels.begin(), labels.end());
  res.per_split.assign(splits.begin(), splits.end());
  log << res.entries << " entries, " << res.annotated << " annotated\n";
  for (const auto& [k, v] : res.per_label) log << "  label " << k << ": " << v << '\n';
  for (const auto& [k, v] : res.per_split) log << "  split " << k << ": " << v << '\n';
  if (kfold) {
    prepare_output(cfg);
    const auto folds = kfold_split(manifest, *kfold, cfg.seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      save_manifest(folds[f].train, cfg.output_dir / ("fold-" + std::to_string(f + 1) + "-train.csv"));
      save_manifest(folds[f].test, cfg.output_dir / ("fold-" + std::to_string(f + 1) + "-test.csv"));
    }
    log << "wrote " << folds.size() << " folds to " << cfg.output_dir.string() << '\n';
  }
  return res;
}

void cmd_preprocess(const CommonOptions& common, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  const DatasetManifest manifest = load_nonempty(common.manifest);
  prepare_output(cfg);
  const fs::path dir = cfg.output_dir / "preprocessed";
  fs::create_directories(dir);
  parallel_for(manifest.entries.size(), cfg.jobs, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    with_context(e.id(), [&] {
      Recording raw = load_recording(e.recording);
      raw.id = e.id();
      save_recording_csv(prepare_recording(raw, cfg), dir / (e.id() + ".csv"));
      return 0;
    });
  });
  log << "preprocessed " << manifest.entries.size() << " recording(s) into " << dir.string() << '\n';
}

void cmd_train(const CommonOptions& common, TrainTarget target, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  const DatasetManifest manifest = load_nonempty(common.manifest);
  if (manifest.with_split("train").entries.empty()) throw ValidationError("manifest has no train split");
  prepare_output(cfg);
  fs::create_directories(cfg.model_dir);
  if (target == TrainTarget::Segmenter) {
    const SegmenterModel model = train_segmenter_from(manifest, cfg, log);
    write_json(to_json(model), cfg.model_dir / kSegmenterFile);
    std::ofstream tl(cfg.model_dir / "segmenter.log");
    tl << "recordings " << manifest.with_split("train").entries.size() << '\n';
    tl << "order " << model.params.P << '\n';
    log << "wrote " << (cfg.model_dir / kSegmenterFile).string() << '\n';
    return;
  }
  std::vector<ClassTrainingLog> training;
  const ClassifierBank bank = train_classifier_from(manifest, cfg, log, &training);
  write_json(to_json(bank), cfg.model_dir / kClassifierFile);
  std::ofstream tl(cfg.model_dir / "classifier.log");
  tl << std::setprecision(12);
  for (const auto& t : training) {
    tl << "model " << to_string(t.label) << " sequences " << t.sequences << " iterations " << t.report.iterations
       << " converged " << (t.report.converged ? "yes" : "no") << '\n';
    for (std::size_t i = 0; i < t.report.loglik.size(); ++i) {
      tl << "  iteration " << i << " loglik " << t.report.loglik[i] << '\n';
    }
    for (const auto& w : t.warnings) tl << "  warning: " << w << '\n';
  }
  log << "wrote " << (cfg.model_dir / kClassifierFile).string() << '\n';
}

std::vector<RecordingSegResult> cmd_segment(const CommonOptions& common, const SegmentOptions& opts,
                                            std::ostream& log) {
  PipelineConfig cfg = resolve_config(common);
  if (opts.method) cfg.method = *opts.method;
  const DatasetManifest manifest = load_nonempty(common.manifest);
  const auto entries = segmentable(evaluation_entries(manifest));
  if (entries.empty()) throw ValidationError("no entries to segment");
  prepare_output(cfg);
  const SegmenterModel model = obtain_segmenter(manifest, cfg, log);
  const std::string method(to_string(cfg.method));
  const fs::path dir = cfg.output_dir / ("segment-" + method);
  fs::create_directories(dir);

  std::vector<std::optional<RecordingSegResult>> rows(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
    const LoadedEntry l = load_entry(entries[i], cfg);
    with_context(l.entry.id(), [&] {
      const SegmentationResult seg = segment_recording(l.prepared, model, cfg.method);
      save_annotations(AnnotationTrack::from_states(seg.states), dir / write_track_name(l.entry.id()));
      if (opts.dump_trajectory) write_trajectory_csv(seg.M, dir / (l.entry.id() + ".trajectory.csv"));
      if (l.track) {
        const auto [ref, pred] = aligned_spans(seg.states, *l.track);
        rows[i] = RecordingSegResult{l.entry.id(), seg_metrics(segmentation_confusion(pred, ref))};
      }
      return 0;
    });
  });
  std::vector<RecordingSegResult> out;
  for (auto& r : rows) {
    if (r) out.push_back(std::move(*r));
  }
  write_seg_reports(out, cfg.output_dir / ("seg_report_" + method));
  const auto acc = [&] {
    std::vector<std::optional<double>> v;
    for (const auto& r : out) v.push_back(r.metrics.acc);
    return mean_sd(v);
  }();
  log << "segmented " << entries.size() << " recording(s) with " << method << "; mean Acc "
      << format_percent(acc.mean) << "% over " << acc.n << " annotated\n";
  return out;
}

ClassifySummary cmd_classify(const CommonOptions& common, const ClassifyOptions& opts, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  const DatasetManifest manifest = load_nonempty(common.manifest);
  std::vector<ManifestEntry> entries;
  for (const auto& e : evaluation_entries(manifest)) {
    if (e.label != ClassLabel::Noise) entries.push_back(e);
  }
  if (entries.empty()) throw ValidationError("no entries to classify");
  prepare_output(cfg);
  const ClassifierBank bank = obtain_classifier(manifest, cfg, log);
  if (opts.xfactor && !bank.has(ClassLabel::XFactor)) {
    throw ValidationError("--xfactor requested but the classifier bank has no xfactor model");
  }
  if (bank.features.fs != cfg.working_rate) {
    throw ValidationError("classifier features were computed at " + std::to_string(bank.features.fs) +
                          " Hz; signal.working_rate is " + std::to_string(cfg.working_rate));
  }
  const auto segmenter = optional_segmenter(manifest, entries, cfg, log);

  struct EntryResult {
    std::vector<BeatSegment> beats;
    std::vector<BeatDecision> decisions;
  };
  std::vector<EntryResult> results(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
    const LoadedEntry l = load_entry(entries[i], cfg);
    with_context(l.entry.id(), [&] {
      auto& r = results[i];
      r.beats = beat_features(l.prepared, beat_source(l, segmenter), bank.features, l.entry.label);
      for (const auto& b : r.beats) r.decisions.push_back(classify_beat(bank, b.features, opts.xfactor));
      return 0;
    });
  });

  ClassifySummary sum;
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  XFactorConfusion xf;
  xf.wa = quality_weights(manifest.with_split("train"), ClassLabel::Abnormal);
  xf.wn = quality_weights(manifest.with_split("train"), ClassLabel::Normal);

  std::ofstream beats_csv(cfg.output_dir / "classify_beats.csv");
  std::ofstream recs_csv(cfg.output_dir / "classify_recordings.csv");
  if (!beats_csv || !recs_csv) throw ValidationError("cannot write classification reports");
  beats_csv << "recording,beat_index,start,end,reference,label,score_normal,score_abnormal,score_xfactor\n";
  recs_csv << "recording,reference,quality,beats,label\n";
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& r = results[i];
    std::vector<ClassLabel> labels;
    for (std::size_t b = 0; b < r.beats.size(); ++b) {
      const auto& d = r.decisions[b];
      labels.push_back(d.label);
      beats_csv << e.id() << ',' << b << ',' << r.beats[b].start << ',' << r.beats[b].end << ','
                << to_string(e.label) << ',' << to_string(d.label) << ',' << fmt_score(d.score_normal) << ','
                << fmt_score(d.score_abnormal) << ',' << fmt_score(d.score_xfactor) << '\n';
      ++sum.beats;
      const bool ref_abn = e.label == ClassLabel::Abnormal;
      if (e.label != ClassLabel::Normal && !ref_abn) continue;
      const auto qi = static_cast<std::size_t>(e.quality == Quality::Poor ? 1 : 0);
      if (d.label == ClassLabel::XFactor) {
        (ref_abn ? xf.aq : xf.nq)[qi] += 1;
        continue;
      }
      const bool pred_abn = d.label == ClassLabel::Abnormal;
      if (ref_abn) (pred_abn ? xf.aa : xf.an)[qi] += 1;
      else (pred_abn ? xf.na : xf.nn)[qi] += 1;
      if (ref_abn && pred_abn) ++tp;
      else if (ref_abn) ++fn;
      else if (pred_abn) ++fp;
      else ++tn;
    }
    if (seen.insert(e.id()).second) {
      recs_csv << e.id() << ',' << to_string(e.label) << ',' << to_string(e.quality) << ',' << r.beats.size() << ','
               << (labels.empty() ? std::string("NA") : std::string(to_string(classify_recording(labels)))) << '\n';
    }
  }
  sum.recordings = seen.size();

  std::ofstream metrics(cfg.output_dir / "classify_metrics.txt");
  if (tp + fp + tn + fn > 0) {
    sum.beat_metrics = class_metrics_plain(tp, fp, tn, fn);
    sum.beat_accuracy = sum.beat_metrics.acc;
    metrics << "beat TP " << tp << " FP " << fp << " TN " << tn << " FN " << fn << '\n';
    metrics << "Se " << format_percent(sum.beat_metrics.se) << " Sp " << format_percent(sum.beat_metrics.sp)
            << " P+ " << format_percent(sum.beat_metrics.ppv) << " Acc " << format_percent(sum.beat_metrics.acc)
            << " F1 " << format_percent(sum.beat_metrics.f1) << '\n';
  } else {
    metrics << "no beats with a normal/abnormal reference\n";
  }
  if (opts.xfactor) {
    sum.xfactor_metrics = class_metrics_xfactor(xf);
    metrics << "X-Factor Se " << format_percent(sum.xfactor_metrics->se) << " Sp "
            << format_percent(sum.xfactor_metrics->sp) << " MAcc " << format_percent(sum.xfactor_metrics->macc) << '\n';
    for (const auto& t : sum.xfactor_metrics->absent_terms) metrics << "  absent term: " << t << '\n';
    try {
      sum.penalized_f1 = penalized_f1(xf.aa[0], xf.an[0], xf.na[0], xf.aq[0], xf.nq[0], cfg.alpha);
      metrics << "penalized F1 " << format_percent(sum.penalized_f1) << " (alpha " << cfg.alpha << ")\n";
    } catch (const ValidationError&) {
      metrics << "penalized F1 NA\n";
    }
  }
  log << "classified " << sum.beats << " beat(s) from " << sum.recordings << " recording(s); beat Acc "
      << format_percent(sum.beat_accuracy) << "%\n";
  return sum;
}

std::vector<RecordingSegResult> cmd_evaluate(const CommonOptions& common, const fs::path& pred_dir,
                                             std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  const DatasetManifest manifest = load_nonempty(common.manifest);
  prepare_output(cfg);
  std::vector<RecordingSegResult> rows;
  for (const auto& e : segmentable(evaluation_entries(manifest))) {
    if (!e.annotation) continue;
    const fs::path pred_path = pred_dir / write_track_name(e.id());
    if (!fs::exists(pred_path)) throw ValidationError("missing prediction " + pred_path.string());
    with_context(e.id(), [&] {
      const Recording raw = load_recording(e.recording);
      const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(raw.samples.size()) *
                                                        cfg.working_rate / raw.sample_rate));
      const AnnotationTrack ref = rescale_track(load_annotations(*e.annotation), raw.sample_rate, cfg.working_rate, n);
      const AnnotationTrack pred = load_annotations(pred_path);
      StateSequence pred_states(pred.begin_sample(), 0);
      const auto ex = pred.expand();
      pred_states.insert(pred_states.end(), ex.begin(), ex.end());
      const auto [r, p] = aligned_spans(pred_states, ref);
      rows.push_back({e.id(), seg_metrics(segmentation_confusion(p, r))});
      return 0;
    });
  }
  if (rows.empty()) throw ValidationError("no annotated entries to evaluate");
  write_seg_reports(rows, cfg.output_dir / "eval_report");
  log << "evaluated " << rows.size() << " recording(s)\n";
  return rows;
}

fs::path cmd_synth(const CommonOptions& common, const SynthOptions& opts, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(common);
  if (opts.train_count < 0 || opts.test_count < 0 || opts.train_count + opts.test_count == 0) {
    throw ValidationError("synth: need at least one recording");
  }
  if (!(opts.seconds > 0.0)) throw ValidationError("synth: duration must be positive");
  prepare_output(cfg);
  const double fs_hz = cfg.working_rate;
  const MsarParams params = opts.model ? msar_from_json(read_json(*opts.model)) : demo_msar_params(fs_hz, cfg.msar.order);
  const auto mean_s = demo_duration_means();
  const auto sd_s = demo_duration_sds();
  std::vector<double> mean(mean_s.size()), sd(sd_s.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    mean[j] = mean_s[j] * fs_hz;
    sd[j] = sd_s[j] * fs_hz;
  }
  const auto n = static_cast<std::size_t>(std::llround(opts.seconds * fs_hz));
  const int total = opts.train_count + opts.test_count;
  DatasetManifest manifest;
  std::vector<std::string> warnings;
  for (int i = 0; i < total; ++i) {
    const std::uint64_t seed = opts.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    SynthSpec spec;
    spec.params = params;
    spec.seed = seed;
    spec.length = n;
    spec.plan = cyclic_duration_plan(mean, sd, n, 1 + i % params.K, seed ^ 0x9e3779b97f4a7c15ULL);
    SynthOutput gen = generate_msar(spec);
    if (i == 0) warnings = gen.warnings;
    std::ostringstream name;
    name << "synth_" << std::setw(3) << std::setfill('0') << i;
    Recording rec{std::move(gen.signal), cfg.working_rate, name.str()};
    save_recording_csv(rec, cfg.output_dir / (name.str() + ".csv"));
    save_annotations(AnnotationTrack::from_states(gen.states), cfg.output_dir / (name.str() + ".ann.csv"));
    ManifestEntry e;
    e.recording = name.str() + ".csv";
    e.annotation = fs::path(name.str() + ".ann.csv");
    e.label = ClassLabel::Normal;
    e.split = i < opts.train_count ? "train" : "test";
    manifest.entries.push_back(std::move(e));
  }
  const fs::path out = cfg.output_dir / "manifest.csv";
  save_manifest(manifest, out);
  {
    std::ofstream meta(cfg.output_dir / "synth_meta.txt");
    meta << "seed " << opts.seed << "\nrecordings " << total << "\nseconds " << opts.seconds << '\n';
    meta << nlohmann::json(to_json(params)).dump() << '\n';
  }
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  log << "wrote " << total << " synthetic recording(s) and " << out.string() << '\n';
  return out;
}

}  // namespace hsseg::tools
