#pragma once

// Glue between the data, the float CNN and the spiking network.
//
// The CNN is trained on the encoder's expected spike rate of each sample,
// expected_rate(x) = Phi((x - mean) / sigma), rather than on raw microvolts.
// That is the value the spiking network's input rate converges to, so the
// converted network sees on average what the CNN was trained on.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "spikecnn/cnn.hpp"
#include "spikecnn/conversion.hpp"
#include "spikecnn/eeg.hpp"
#include "spikecnn/evaluation.hpp"
#include "spikecnn/snn.hpp"
#include "spikecnn/spike_encoder.hpp"

namespace spikecnn {

inline Tensor<double> raw_input(const WindowSample& w) { return w.data.cast<double>(); }

inline LabeledSample rate_domain_sample(const WindowSample& w, const EncoderConfig& enc) {
  return {expected_rate(raw_input(w), enc), w.label};
}

inline std::vector<LabeledSample> rate_domain_samples(std::span<const WindowSample> windows, const EncoderConfig& enc) {
  std::vector<LabeledSample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(rate_domain_sample(w, enc));
  return out;
}

// Encoder config for sample `index`: same thresholds, seed derived from the base seed.
inline EncoderConfig sample_encoder(const EncoderConfig& enc, std::size_t index) {
  EncoderConfig c = enc;
  c.seed = derive_seed(enc.seed, index);
  return c;
}

inline SpikeTrain encode_window(const WindowSample& w, const EncoderConfig& enc, std::size_t index) {
  return encode(raw_input(w), sample_encoder(enc, index));
}

inline std::vector<SpikeTrain> encode_windows(std::span<const WindowSample> windows, const EncoderConfig& enc) {
  std::vector<SpikeTrain> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) out.push_back(encode_window(windows[i], enc, i));
  return out;
}

// Offset separating calibration encodings from inference encodings of the
// same base seed.
inline constexpr std::size_t kCalibrationSeedOffset = 1u << 20;

// Training settings that convert well: zero biases (so threshold scaling is
// exact in the rate domain) and per-class logistic outputs (so the winning
// output has positive drive and fires).
inline SgdHyper conversion_friendly_hyper(std::uint64_t seed) {
  SgdHyper h;
  h.lr = 0.01;
  h.epochs = 30;
  h.batch = 8;
  h.seed = seed;
  h.train_bias = false;
  h.loss = LossKind::one_vs_rest_logistic;
  return h;
}

// Rate-gated pooling by default here: OR-pooling lets a window fire at up to
// the union of its inputs' rates, which does not converge to the CNN's max.
struct ConversionParams {
  std::size_t calibration_samples = 60;
  double percentile = 100.0;
  bool refine_scale = true;
  std::vector<double> scale_candidates = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0};
  ResetMode reset = ResetMode::subtract_threshold;
  PoolMode pooling = PoolMode::rate_gated;
};

// map_weights, max-activation calibration on the first calibration_samples
// windows, then (optionally) the hidden-threshold scale search on the same
// windows encoded with enc.time_steps.
inline SnnModel convert_and_calibrate(const NetworkSpec& cnn_spec, const WeightContainer& weights,
                                      std::span<const WindowSample> calibration_windows, const EncoderConfig& enc,
                                      const ConversionParams& params = {}, CalibrationReport* report = nullptr) {
  SnnModel model = map_weights(cnn_spec, weights);
  set_reset_mode(model, params.reset);
  model.pooling = params.pooling;
  const std::size_t n = std::min(params.calibration_samples, calibration_windows.size());
  if (n == 0) throw InputError("convert: no calibration windows");
  std::vector<SpikeTrain> trains;
  std::vector<Label> labels;
  trains.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    trains.push_back(encode_window(calibration_windows[i], enc, kCalibrationSeedOffset + i));
    labels.push_back(calibration_windows[i].label);
  }
  CalibrationReport r = calibrate_thresholds(model, trains, {params.percentile});
  if (params.refine_scale) {
    auto refined = refine_threshold_scale(model, trains, labels, params.scale_candidates);
    r.thresholds = std::move(refined.thresholds);
  }
  if (report != nullptr) *report = std::move(r);
  return model;
}

inline PredictionRow predict(const SnnModel& model, const SpikeTrain& train, std::size_t sample_id, Label label,
                             std::int64_t count_threshold, TieBreak tie = TieBreak::interictal,
                             OpCounter* counter = nullptr) {
  const SpikeCounts counts = run_network(model, train, counter);
  return {sample_id, label, counts.preictal(), counts.interictal(), score(counts), decide(counts, count_threshold, tie)};
}

// Encodes and classifies every window; row i belongs to windows[i].
inline std::vector<PredictionRow> infer(const SnnModel& model, std::span<const WindowSample> windows,
                                        const EncoderConfig& enc, std::int64_t count_threshold,
                                        TieBreak tie = TieBreak::interictal) {
  std::vector<PredictionRow> rows;
  rows.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    rows.push_back(predict(model, encode_window(windows[i], enc, i), i, windows[i].label, count_threshold, tie));
  }
  return rows;
}

inline double prediction_accuracy(std::span<const PredictionRow> rows) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : rows) correct += r.prediction == r.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace spikecnn
