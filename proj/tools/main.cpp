#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "hsseg/error.hpp"

namespace {

using namespace hsseg;
using namespace hsseg::tools;

// Shorthand flags that expand to config overrides.
struct SignalFlags {
  std::string band;  // "low:high"
  std::optional<int> order;
  std::optional<double> spike_window;
  bool no_normalize = false;
  std::optional<int> rate;

  void append_to(std::vector<std::string>& overrides) const {
    if (!band.empty()) {
      const auto colon = band.find(':');
      if (colon == std::string::npos) throw ValidationError("--band expects LOW:HIGH, got '" + band + "'");
      overrides.push_back("preprocess.band_low=" + band.substr(0, colon));
      overrides.push_back("preprocess.band_high=" + band.substr(colon + 1));
    }
    if (order) overrides.push_back("preprocess.order=" + std::to_string(*order));
    if (spike_window) overrides.push_back("preprocess.spike_window=" + std::to_string(*spike_window));
    if (no_normalize) overrides.push_back("preprocess.normalize=false");
    if (rate) overrides.push_back("signal.working_rate=" + std::to_string(*rate));
  }
};

void add_signal_flags(CLI::App* cmd, SignalFlags& flags) {
  cmd->add_option("--band", flags.band, "Band-pass edges in Hz, LOW:HIGH");
  cmd->add_option("--order", flags.order, "Butterworth order");
  cmd->add_option("--spike-window", flags.spike_window, "Spike-removal window in seconds");
  cmd->add_flag("--no-normalize", flags.no_normalize, "Skip z-score normalisation");
  cmd->add_option("--rate", flags.rate, "Working sample rate in Hz");
}

void add_common(CLI::App* cmd, CommonOptions& common, bool needs_manifest = true) {
  auto* m = cmd->add_option("--manifest,-m", common.manifest, "Dataset manifest CSV");
  if (needs_manifest) m->required();
  cmd->add_option("--config,-c", common.config, "Flat key = value config file");
  cmd->add_option("--set", common.overrides, "Config override key=value (repeatable)");
  cmd->add_option("--jobs,-j", common.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  cmd->add_option("--out,-o", common.output_dir, "Output directory");
  cmd->add_option("--models", common.model_dir, "Model directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heart-sound segmentation and classification"};
  app.require_subcommand(1);

  CommonOptions common;
  SignalFlags signal_flags;

  auto* ingest = app.add_subcommand("ingest", "Validate a manifest and optionally write k-fold manifests");
  add_common(ingest, common);
  add_signal_flags(ingest, signal_flags);
  std::optional<int> kfold;
  ingest->add_option("--kfold", kfold, "Write stratified fold manifests")->check(CLI::Range(2, 1000));

  auto* preprocess = app.add_subcommand("preprocess", "Resample, filter, despike and normalise recordings");
  add_common(preprocess, common);
  add_signal_flags(preprocess, signal_flags);

  auto* train = app.add_subcommand("train", "Train the segmenter or the classifier bank");
  add_common(train, common);
  add_signal_flags(train, signal_flags);
  std::string target;
  train->add_option("--target", target, "segmenter | classifier")
      ->required()
      ->check(CLI::IsMember({"segmenter", "classifier"}));

  auto* segment = app.add_subcommand("segment", "Segment recordings into S1/systole/S2/diastole");
  add_common(segment, common);
  add_signal_flags(segment, signal_flags);
  std::string method;
  bool dump = false;
  segment->add_option("--method", method, "skf | sks | skf-viterbi")
      ->check(CLI::IsMember({"skf", "sks", "skf-viterbi"}));
  segment->add_flag("--dump-trajectory", dump, "Write per-sample regime probabilities");

  auto* classify = app.add_subcommand("classify", "Classify beats and recordings");
  add_common(classify, common);
  add_signal_flags(classify, signal_flags);
  bool xfactor = false;
  classify->add_flag("--xfactor", xfactor, "Enable the X-Factor class");

  auto* evaluate = app.add_subcommand("evaluate", "Score saved segmentations against annotations");
  add_common(evaluate, common);
  add_signal_flags(evaluate, signal_flags);
  std::filesystem::path pred_dir;
  evaluate->add_option("--pred", pred_dir, "Directory with <id>.seg.csv files")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic MSAR dataset with annotations");
  add_common(synth, common, false);
  add_signal_flags(synth, signal_flags);
  SynthOptions synth_opts;
  synth->add_option("--train", synth_opts.train_count, "Training recordings");
  synth->add_option("--test", synth_opts.test_count, "Test recordings");
  synth->add_option("--seconds", synth_opts.seconds, "Recording length in seconds");
  synth->add_option("--seed", synth_opts.seed, "Generator seed");
  synth->add_option("--model", synth_opts.model, "MSAR parameter JSON (demo parameters otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    signal_flags.append_to(common.overrides);
    if (*ingest) {
      cmd_ingest(common, kfold, std::cout);
    } else if (*preprocess) {
      cmd_preprocess(common, std::cout);
    } else if (*train) {
      cmd_train(common, target == "segmenter" ? TrainTarget::Segmenter : TrainTarget::Classifier, std::cout);
    } else if (*segment) {
      SegmentOptions opts;
      if (!method.empty()) opts.method = parse_inference_method(method);
      opts.dump_trajectory = dump;
      cmd_segment(common, opts, std::cout);
    } else if (*classify) {
      cmd_classify(common, ClassifyOptions{xfactor}, std::cout);
    } else if (*evaluate) {
      cmd_evaluate(common, pred_dir, std::cout);
    } else if (*synth) {
      cmd_synth(common, synth_opts, std::cout);
    }
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return 3;
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 0;
}
