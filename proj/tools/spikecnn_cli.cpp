// spikecnn: synth -> windows -> train -> convert -> infer -> evaluate, plus opcount.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spikecnn/spikecnn.hpp"

namespace fs = std::filesystem;
using namespace spikecnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct EncoderArgs {
  std::uint32_t time_steps = 10;
  double v_th_up = 50.0;
  double v_th_down = -50.0;
  double sigma = 0.0;  // 0: (up - down) / 2

  void add(CLI::App* cmd) {
    cmd->add_option("--time-steps,-T", time_steps, "Simulation time steps per sample")->capture_default_str();
    cmd->add_option("--v-th-up", v_th_up, "Encoder upper threshold (uV)")->capture_default_str();
    cmd->add_option("--v-th-down", v_th_down, "Encoder lower threshold (uV)")->capture_default_str();
    cmd->add_option("--sigma", sigma, "Encoder threshold noise sd; 0 means (up - down) / 2")->capture_default_str();
  }

  [[nodiscard]] EncoderConfig config(std::uint64_t seed) const {
    EncoderConfig c = make_encoder_config(time_steps, v_th_up, v_th_down, seed);
    if (sigma > 0.0) c.sigma = sigma;
    c.validate();
    return c;
  }
};

struct Options {
  std::uint64_t seed = 1;

  // synth
  std::string edf_out = "recording.edf";
  std::string annotations_out = "annotations.csv";
  double hours = 6.0;
  std::size_t channels = 4;
  double sample_rate = 16.0;
  std::vector<double> onsets_h{5.0};
  double burst_amplitude = 60.0;

  // windows
  std::string edf_in = "recording.edf";
  std::string annotations_in = "annotations.csv";
  std::string train_out = "train.wsmp";
  std::string test_out = "test.wsmp";
  double window_s = 20.0;
  double preictal_stride_s = 15.0;
  double interictal_stride_s = 20.0;
  double pil_s = 1800.0;
  double sph_s = 300.0;
  double lead_gap_s = 14400.0;
  double train_fraction = 0.8;

  // train
  std::string samples = "train.wsmp";
  std::string infer_samples = "test.wsmp";
  std::string network;
  std::string network_out;
  std::string weights_out = "weights.scnw";
  double lr = 0.01;
  int epochs = 30;
  std::size_t batch = 8;
  bool train_bias = false;
  std::string loss = "one-vs-rest";
  EncoderArgs encoder;

  // convert
  std::string weights_in = "weights.scnw";
  std::string calibration = "train.wsmp";
  std::string model_out = "model.snn";
  std::size_t calibration_samples = 60;
  double percentile = 100.0;
  bool no_refine = false;
  std::string reset = "subtract";
  std::string pooling = "rate_gated";

  // infer
  std::string model_in = "model.snn";
  std::string predictions_out = "predictions.csv";
  std::int64_t count_threshold = 0;
  std::string tie = "interictal";

  // evaluate
  std::string predictions_in = "predictions.csv";
  std::string metrics_out = "metrics.csv";
  std::string roc_out = "roc.csv";
  std::vector<std::int64_t> thresholds{0, 1, 2, 3, 4};

  // opcount
  std::vector<std::size_t> input_shape{1, 23, 5120};
  std::string format = "kv";
  std::string report_out;
};

void say(const std::string& line) { std::cout << line << '\n'; }

NetworkSpec resolve_network(const Options& o, const Shape3& input) {
  if (!o.network.empty()) {
    NetworkSpec spec = load_network_spec(o.network);
    if (spec.input != input) {
      throw StructuralError("network input " + to_string(spec.input) + " does not match samples " + to_string(input));
    }
    return spec;
  }
  return default_topology(input);
}

Shape3 sample_shape(const std::vector<WindowSample>& windows, const std::string& path) {
  if (windows.empty()) throw InputError(path + ": contains no samples");
  return windows.front().data.shape3();
}

TieBreak parse_tie(const std::string& s) {
  if (s == "interictal") return TieBreak::interictal;
  if (s == "preictal") return TieBreak::preictal;
  throw ConfigError("--tie must be interictal or preictal, got \"" + s + "\"");
}

LossKind parse_loss(const std::string& s) {
  if (s == "softmax") return LossKind::softmax_cross_entropy;
  if (s == "one-vs-rest") return LossKind::one_vs_rest_logistic;
  throw ConfigError("--loss must be softmax or one-vs-rest, got \"" + s + "\"");
}

ResetMode parse_reset(const std::string& s) {
  if (s == "subtract") return ResetMode::subtract_threshold;
  if (s == "rest") return ResetMode::to_rest;
  throw ConfigError("--reset must be subtract or rest, got \"" + s + "\"");
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------

void cmd_synth(const Options& o) {
  SynthConfig cfg;
  cfg.duration_s = o.hours * 3600.0;
  cfg.channels = o.channels;
  cfg.sample_rate = o.sample_rate;
  cfg.seizure_onsets_s.clear();
  for (double h : o.onsets_h) cfg.seizure_onsets_s.push_back(h * 3600.0);
  cfg.burst_amplitude = o.burst_amplitude;
  const SynthResult r = synth_generate(cfg, o.seed);
  write_edf(r.recording, o.edf_out);
  write_text(o.annotations_out, annotations_csv(r.seizures));
  say("wrote " + o.edf_out + " (" + std::to_string(r.recording.channels) + " channels, " +
      format_double(r.recording.duration_s()) + " s) and " + o.annotations_out);
}

void cmd_windows(const Options& o) {
  const EegRecording rec = read_edf(o.edf_in);
  const SeizureAnnotations seizures = read_annotations_csv(o.annotations_in);
  const IntervalPlan plan = label_intervals(seizures, rec.duration_s(), {o.pil_s, o.sph_s, o.lead_gap_s});
  const auto windows = extract_windows(rec, plan, {o.window_s, o.preictal_stride_s, o.interictal_stride_s});
  std::size_t pre = 0;
  for (const auto& w : windows) pre += w.label == Label::preictal ? 1 : 0;
  const SplitResult split = split_train_test(windows, o.train_fraction, o.seed);
  save_windows(split.train, o.train_out);
  save_windows(split.test, o.test_out);
  say("windows: " + std::to_string(pre) + " preictal, " + std::to_string(windows.size() - pre) + " interictal; train " +
      std::to_string(split.train.size()) + " -> " + o.train_out + ", test " + std::to_string(split.test.size()) + " -> " +
      o.test_out);
}

void cmd_train(const Options& o) {
  const auto windows = load_windows(o.samples);
  const NetworkSpec spec = resolve_network(o, sample_shape(windows, o.samples));
  const EncoderConfig enc = o.encoder.config(o.seed);
  const auto dataset = rate_domain_samples(windows, enc);
  SgdHyper hyper = conversion_friendly_hyper(o.seed);
  hyper.lr = o.lr;
  hyper.epochs = o.epochs;
  hyper.batch = o.batch;
  hyper.train_bias = o.train_bias;
  hyper.loss = parse_loss(o.loss);
  const TrainResult r = train_sgd<float>(spec, dataset, hyper, nullptr, [](int epoch, double loss) {
    say("epoch " + std::to_string(epoch) + " loss " + format_fixed(loss, 6));
  });
  save_weights(r.weights, o.weights_out);
  if (!o.network_out.empty()) write_text(o.network_out, to_json(spec).dump(2) + "\n");
  say("train accuracy " + format_fixed(cnn_accuracy(spec, r.weights, dataset), 4) + "; wrote " + o.weights_out);
}

void cmd_convert(const Options& o) {
  const WeightContainer weights = load_weights(o.weights_in);
  const auto windows = load_windows(o.calibration);
  const NetworkSpec spec = resolve_network(o, sample_shape(windows, o.calibration));
  ConversionParams params;
  params.calibration_samples = o.calibration_samples;
  params.percentile = o.percentile;
  params.refine_scale = !o.no_refine;
  params.reset = parse_reset(o.reset);
  params.pooling = parse_pool_mode(o.pooling);
  CalibrationReport report;
  const SnnModel model = convert_and_calibrate(spec, weights, windows, o.encoder.config(o.seed), params, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  save_model(model, o.model_out);
  std::string th;
  for (double v : report.thresholds) th += (th.empty() ? "" : ",") + format_double(v);
  say("thresholds " + th);
  say("wrote " + o.model_out);
}

void cmd_infer(const Options& o) {
  const SnnModel model = load_model(o.model_in);
  const auto windows = load_windows(o.infer_samples);
  const auto rows = infer(model, windows, o.encoder.config(o.seed), o.count_threshold, parse_tie(o.tie));
  write_text(o.predictions_out, predictions_csv(rows));
  say("accuracy " + format_fixed(prediction_accuracy(rows), 4) + " over " + std::to_string(rows.size()) +
      " samples; wrote " + o.predictions_out);
}

void cmd_evaluate(const Options& o) {
  if (!fs::exists(o.predictions_in)) throw InputError("predictions file not found: " + o.predictions_in);
  const auto rows = parse_predictions_csv(read_file_text(o.predictions_in), o.predictions_in);
  std::vector<SpikeCounts> counts;
  std::vector<Label> labels;
  std::vector<Label> predictions;
  std::vector<double> scores;
  for (const auto& r : rows) {
    counts.push_back(r.counts(0));
    labels.push_back(r.label);
    predictions.push_back(r.prediction);
    scores.push_back(r.score);
  }
  const auto sweep = threshold_sweep(counts, labels, o.thresholds, parse_tie(o.tie));
  write_text(o.metrics_out, metrics_csv(sweep));
  const Metrics m = metrics(confusion(predictions, labels));
  say("acc=" + format_ratio(m.acc));
  say("sen=" + format_ratio(m.sen));
  say("fpr=" + format_ratio(m.fpr));
  const bool both = std::count(labels.begin(), labels.end(), Label::preictal) > 0 &&
                    std::count(labels.begin(), labels.end(), Label::interictal) > 0;
  if (both) {
    const RocCurve curve = roc(scores, labels);
    write_text(o.roc_out, roc_csv(curve));
    say("auc=" + format_fixed(auc(curve), 6));
  } else {
    std::cerr << "warning: only one class present; ROC not written\n";
    say("auc=nan");
  }
}

void cmd_opcount(const Options& o) {
  NetworkSpec spec;
  if (!o.network.empty()) {
    spec = load_network_spec(o.network);
  } else {
    if (o.input_shape.size() != 3) throw ConfigError("--input needs three values C H W");
    spec = default_topology(Shape3{o.input_shape[0], o.input_shape[1], o.input_shape[2]});
  }
  const auto cnn = static_op_counts(spec, PathMode::cnn, o.encoder.time_steps);
  const auto snn = static_op_counts(spec, PathMode::snn, o.encoder.time_steps);
  std::string text;
  if (o.format == "json") {
    text = nlohmann::json{{"cnn", to_json(cnn)}, {"snn", to_json(snn)}}.dump(2) + "\n";
  } else if (o.format == "kv") {
    std::istringstream a(to_key_value(cnn));
    std::istringstream b(to_key_value(snn));
    for (std::string line; std::getline(a, line);) text += "cnn." + line + "\n";
    for (std::string line; std::getline(b, line);) text += "snn." + line + "\n";
  } else {
    throw ConfigError("--format must be kv or json, got \"" + o.format + "\"");
  }
  if (o.report_out.empty()) {
    std::cout << text;
  } else {
    write_text(o.report_out, text);
    say("wrote " + o.report_out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Spiking-CNN seizure prediction toolkit"};
  app.name("spikecnn");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.add_option("--seed", o.seed, "Seed for every stochastic step (env SPIKECNN_SEED)")
      ->envname("SPIKECNN_SEED")
      ->capture_default_str();
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording (EDF) and seizure annotations (CSV)");
  synth->add_option("--edf", o.edf_out, "Output EDF path")->capture_default_str();
  synth->add_option("--annotations", o.annotations_out, "Output annotation CSV path")->capture_default_str();
  synth->add_option("--hours", o.hours, "Recording length in hours")->capture_default_str();
  synth->add_option("--channels", o.channels, "Channel count")->capture_default_str();
  synth->add_option("--rate", o.sample_rate, "Sampling rate in Hz")->capture_default_str();
  synth->add_option("--onsets", o.onsets_h, "Seizure onsets in hours")->capture_default_str();
  synth->add_option("--burst-amplitude", o.burst_amplitude, "Preictal burst amplitude (uV)")->capture_default_str();

  auto* windows = app.add_subcommand("windows", "Label intervals, extract windows and split train/test");
  windows->add_option("--edf", o.edf_in, "Input EDF path")->capture_default_str();
  windows->add_option("--annotations", o.annotations_in, "Input annotation CSV")->capture_default_str();
  windows->add_option("--train-out", o.train_out, "Output training windows")->capture_default_str();
  windows->add_option("--test-out", o.test_out, "Output test windows")->capture_default_str();
  windows->add_option("--window-s", o.window_s, "Window length (s)")->capture_default_str();
  windows->add_option("--preictal-stride-s", o.preictal_stride_s, "Preictal window stride (s)")->capture_default_str();
  windows->add_option("--interictal-stride-s", o.interictal_stride_s, "Interictal window stride (s)")
      ->capture_default_str();
  windows->add_option("--pil-s", o.pil_s, "Preictal interval length (s)")->capture_default_str();
  windows->add_option("--sph-s", o.sph_s, "Seizure prediction horizon (s)")->capture_default_str();
  windows->add_option("--lead-gap-s", o.lead_gap_s, "Minimum gap defining a lead seizure (s)")->capture_default_str();
  windows->add_option("--train-fraction", o.train_fraction, "Fraction of windows used for training")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the reference CNN on the encoder's expected input rates");
  train->add_option("--samples", o.samples, "Training windows")->capture_default_str();
  train->add_option("--network", o.network, "Network JSON; default topology when omitted");
  train->add_option("--network-out", o.network_out, "Also write the network JSON used");
  train->add_option("--out", o.weights_out, "Output weight file")->capture_default_str();
  train->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
  train->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  train->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
  train->add_flag("--train-bias", o.train_bias, "Also train biases (zero-bias networks convert more faithfully)");
  train->add_option("--loss", o.loss, "Output loss: one-vs-rest or softmax")->capture_default_str();
  o.encoder.add(train);

  auto* convert = app.add_subcommand("convert", "Map CNN weights to a spiking model and calibrate thresholds");
  convert->add_option("--weights", o.weights_in, "Input weight file")->capture_default_str();
  convert->add_option("--network", o.network, "Network JSON; default topology when omitted");
  convert->add_option("--calibration", o.calibration, "Calibration windows")->capture_default_str();
  convert->add_option("--calibration-samples", o.calibration_samples, "Windows used for calibration")
      ->capture_default_str();
  convert->add_option("--percentile", o.percentile, "Percentile of weighted input used as v_th")->capture_default_str();
  convert->add_flag("--no-refine", o.no_refine, "Skip the hidden-threshold scale search");
  convert->add_option("--reset", o.reset, "IF reset mode: subtract or rest")->capture_default_str();
  convert->add_option("--pooling", o.pooling, "Spiking max-pool: rate_gated or or")->capture_default_str();
  convert->add_option("--out", o.model_out, "Output model file")->capture_default_str();
  o.encoder.add(convert);

  auto* infer_cmd = app.add_subcommand("infer", "Encode windows, run the spiking model and write predictions CSV");
  infer_cmd->add_option("--model", o.model_in, "Model file")->capture_default_str();
  infer_cmd->add_option("--samples", o.infer_samples, "Windows to classify")->capture_default_str();
  infer_cmd->add_option("--out", o.predictions_out, "Output predictions CSV")->capture_default_str();
  infer_cmd->add_option("--count-threshold", o.count_threshold, "Preictal iff count_p - count_i exceeds this")
      ->capture_default_str();
  infer_cmd->add_option("--tie", o.tie, "Class for a margin equal to the threshold")->capture_default_str();
  o.encoder.add(infer_cmd);

  auto* evaluate = app.add_subcommand("evaluate", "Metrics, ROC and count-threshold sweep from predictions");
  evaluate->add_option("--predictions", o.predictions_in, "Predictions CSV")->capture_default_str();
  evaluate->add_option("--metrics-out", o.metrics_out, "Output threshold sweep CSV")->capture_default_str();
  evaluate->add_option("--roc-out", o.roc_out, "Output ROC CSV")->capture_default_str();
  evaluate->add_option("--thresholds", o.thresholds, "Count thresholds to sweep")->capture_default_str();
  evaluate->add_option("--tie", o.tie, "Class for a margin equal to the threshold")->capture_default_str();

  auto* opcount = app.add_subcommand("opcount", "Operation counts and complexity ratios for both paths");
  opcount->add_option("--network", o.network, "Network JSON; default topology over --input when omitted");
  opcount->add_option("--input", o.input_shape, "Input shape C H W for the default topology")->capture_default_str();
  opcount->add_option("--time-steps,-T", o.encoder.time_steps, "Spiking time steps")->capture_default_str();
  opcount->add_option("--format", o.format, "kv or json")->capture_default_str();
  opcount->add_option("--out", o.report_out, "Write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (print_config) {
    std::cout << app.config_to_str(true, true);
    return kExitOk;
  }

  try {
    if (*synth) cmd_synth(o);
    if (*windows) cmd_windows(o);
    if (*train) cmd_train(o);
    if (*convert) cmd_convert(o);
    if (*infer_cmd) cmd_infer(o);
    if (*evaluate) cmd_evaluate(o);
    if (*opcount) cmd_opcount(o);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
