#pragma once

// CNN -> spiking CNN conversion.
//
// Weights move over unchanged; Relu layers are dropped because the IF neuron
// already rectifies. Per-layer firing thresholds are then calibrated from data.
//
// Model file ("SCNW" container followed by a trailing block):
//   SCNW weight container, layer indices and fingerprint of the source CNN
//   u16 IF layer count
//   per IF layer: f64 v_th | f64 v_rest | f64 leak | u8 reset_mode
//   u32 byte length | UTF-8 JSON {"source_spec": <NetworkSpec>, "calibration": "...",
//                                   "pooling": "rate_gated" | "or"}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spikecnn/binary_io.hpp"
#include "spikecnn/cnn.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/snn.hpp"
#include "spikecnn/spike_encoder.hpp"
#include "spikecnn/text.hpp"
#include "spikecnn/weights.hpp"

namespace spikecnn {

struct SnnModel {
  NetworkSpec source_spec;        // the CNN the weights came from
  NetworkSpec spec;               // spiking variant, no Relu layers
  WeightContainer weights;        // indexed by `spec` layers; fingerprint of source_spec
  std::vector<IfConfig> if_cfgs;  // one per conv/fc layer of `spec`
  std::string calibration;        // provenance of the thresholds
  PoolMode pooling = PoolMode::or_spikes;

  [[nodiscard]] std::uint32_t source_fingerprint() const noexcept { return weights.fingerprint; }

  friend bool operator==(const SnnModel&, const SnnModel&) = default;
};

// For each layer of the spiking variant, the index of the same layer in `cnn_spec`.
inline std::vector<std::size_t> source_layer_indices(const NetworkSpec& cnn_spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cnn_spec.layers.size(); ++i) {
    if (!std::holds_alternative<Relu>(cnn_spec.layers[i])) out.push_back(i);
  }
  return out;
}

inline SnnModel map_weights(const NetworkSpec& cnn_spec, const WeightContainer& cnn_weights) {
  if (cnn_weights.fingerprint != fingerprint(cnn_spec)) {
    throw StructuralError("weights fingerprint " + std::to_string(cnn_weights.fingerprint) +
                          " does not match the CNN spec fingerprint " + std::to_string(fingerprint(cnn_spec)));
  }
  validate_weights(cnn_spec, cnn_weights);
  SnnModel model;
  model.source_spec = cnn_spec;
  model.spec = spiking_variant(cnn_spec);
  model.weights.fingerprint = cnn_weights.fingerprint;
  const auto sources = source_layer_indices(cnn_spec);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (const auto* p = cnn_weights.find(sources[i])) model.weights.layers.push_back({i, p->weights, p->bias});
  }
  model.if_cfgs.assign(neuron_layer_count(model.spec), IfConfig{});
  model.calibration = "default";
  return model;
}

// Weights re-indexed back onto the source CNN's layers.
inline WeightContainer source_weights(const SnnModel& model) {
  const auto sources = source_layer_indices(model.source_spec);
  WeightContainer out{model.weights.fingerprint, {}};
  for (const auto& p : model.weights.layers) out.layers.push_back({sources.at(p.layer_index), p.weights, p.bias});
  return out;
}

inline void set_reset_mode(SnnModel& model, ResetMode mode) {
  for (auto& c : model.if_cfgs) c.reset = mode;
}

inline SpikeCounts run_network(const SnnModel& model, const SpikeTrain& train, OpCounter* counter = nullptr) {
  return run_network(model.spec, model.weights, train, model.if_cfgs, counter, model.pooling);
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct CalibrationOptions {
  // Percentile of the observed weighted inputs used as the threshold; 100 is
  // the plain maximum.
  double percentile = 100.0;
};

struct CalibrationReport {
  std::vector<double> thresholds;
  std::vector<std::string> warnings;
};

// Layer-wise max-activation normalisation in the rate domain. Each
// calibration train is reduced to its input spike rates and propagated through
// the network as rates: a conv/fc layer's weighted input z = W r + b is
// recorded, the layer threshold becomes the maximum (or percentile) of z over
// the whole set, and the layer's output rate is clamp(z / v_th, 0, 1). A
// max-pool layer passes on the largest rate in its window.
//
// A layer that never sees a positive weighted input keeps v_th = 1 and gets a
// warning.
inline CalibrationReport calibrate_thresholds(SnnModel& model, std::span<const SpikeTrain> calibration,
                                              const CalibrationOptions& options = {}) {
  if (calibration.empty()) throw InputError("calibrate_thresholds: calibration set is empty");
  if (!(options.percentile > 0.0 && options.percentile <= 100.0)) {
    throw ConfigError("calibration percentile must be in (0, 100]");
  }
  const auto weights = model.weights.cast<double>();

  std::vector<Tensor<double>> rates;
  rates.reserve(calibration.size());
  for (const auto& train : calibration) {
    if (train.frame() != model.spec.input) throw StructuralError("calibration train does not match network input");
    rates.push_back(spike_rate(train));
  }

  CalibrationReport report;
  std::size_t slot = 0;
  for (std::size_t li = 0; li < model.spec.layers.size(); ++li) {
    const Layer& layer = model.spec.layers[li];
    if (const auto* pool = std::get_if<MaxPool1D>(&layer)) {
      for (auto& r : rates) r = maxpool1d_forward(r, *pool);
      continue;
    }
    const auto& p = weights.at(li);
    std::vector<Tensor<double>> currents;
    currents.reserve(rates.size());
    std::vector<double> observed;
    for (const auto& r : rates) {
      currents.push_back(std::holds_alternative<Conv1D>(layer)
                             ? conv1d_forward(r, std::get<Conv1D>(layer), p.weights, p.bias)
                             : fc_forward(r, p.weights, p.bias));
      observed.insert(observed.end(), currents.back().values().begin(), currents.back().values().end());
    }
    double threshold = 0.0;
    if (options.percentile >= 100.0) {
      threshold = *std::max_element(observed.begin(), observed.end());
    } else {
      // Percentile of the positive weighted inputs; silent neurons do not
      // pull the threshold down.
      std::erase_if(observed, [](double v) { return !(v > 0.0); });
      if (!observed.empty()) {
        const auto k = static_cast<std::size_t>(
            std::max(0.0, std::ceil(options.percentile / 100.0 * static_cast<double>(observed.size())) - 1.0));
        std::nth_element(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(k), observed.end());
        threshold = observed[k];
      }
    }
    if (!(threshold > model.if_cfgs[slot].v_rest)) {
      report.warnings.push_back("layer " + std::to_string(li) +
                                ": no positive weighted input in the calibration set, keeping v_th = 1");
      threshold = 1.0;
    }
    model.if_cfgs[slot].v_th = threshold;
    report.thresholds.push_back(threshold);
    for (std::size_t s = 0; s < rates.size(); ++s) {
      auto& z = currents[s];
      for (auto& v : z.values()) v = std::clamp(v / threshold, 0.0, 1.0);
      rates[s] = std::move(z);
    }
    ++slot;
  }
  model.calibration = "max-activation normalisation over " + std::to_string(calibration.size()) +
                      " samples, percentile " + format_double(options.percentile);
  return report;
}

// Fraction of trains whose decide(counts, 0) matches the label.
inline double snn_accuracy(const SnnModel& model, std::span<const SpikeTrain> trains, std::span<const Label> labels) {
  if (trains.size() != labels.size()) throw InputError("snn_accuracy: trains and labels differ in length");
  if (trains.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < trains.size(); ++i) {
    if (decide(run_network(model, trains[i]), 0) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(trains.size());
}

// Multiplies the v_th of every hidden IF layer (all but the output layer) by
// the candidate factor giving the best validation accuracy. Max-normalised
// thresholds leave most hidden neurons at low rates, which costs accuracy at
// short T; a common factor keeps the layer ratios. Among equally good
// candidates the middle of the longest contiguous run is taken.
inline CalibrationReport refine_threshold_scale(SnnModel& model, std::span<const SpikeTrain> validation,
                                                std::span<const Label> labels, std::vector<double> candidates,
                                                bool include_output = false) {
  if (validation.empty()) throw InputError("refine_threshold_scale: validation set is empty");
  if (candidates.empty()) throw ConfigError("refine_threshold_scale: no candidate factors");
  std::sort(candidates.begin(), candidates.end());
  for (double c : candidates) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("refine_threshold_scale: factors must be positive");
  }
  const std::vector<IfConfig> base = model.if_cfgs;
  const std::size_t hidden = base.empty() ? 0 : (include_output ? base.size() : base.size() - 1);
  auto apply = [&](double factor) {
    for (std::size_t k = 0; k < hidden; ++k) model.if_cfgs[k].v_th = base[k].v_th * factor;
  };
  std::vector<double> acc(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    apply(candidates[i]);
    acc[i] = snn_accuracy(model, validation, labels);
  }
  const double best = *std::max_element(acc.begin(), acc.end());
  std::size_t run_start = 0;
  std::size_t run_len = 0;
  for (std::size_t i = 0; i < acc.size();) {
    if (acc[i] != best) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < acc.size() && acc[j] == best) ++j;
    if (j - i > run_len) {
      run_start = i;
      run_len = j - i;
    }
    i = j;
  }
  const double chosen = candidates[run_start + (run_len - 1) / 2];
  apply(chosen);
  CalibrationReport report;
  for (const auto& cfg : model.if_cfgs) report.thresholds.push_back(cfg.v_th);
  model.calibration += "; hidden thresholds scaled by " + format_double(chosen) + " on " +
                       std::to_string(validation.size()) + " validation samples";
  return report;
}

// Coordinate-wise grid search: for each IF layer in order, try every grid
// value as that layer's v_th (others held fixed) and keep the one with the
// best validation accuracy. Ties go to the smallest value.
inline CalibrationReport calibrate_thresholds_grid(SnnModel& model, std::span<const SpikeTrain> validation,
                                                   std::span<const Label> labels, std::vector<double> grid) {
  if (validation.empty()) throw InputError("calibrate_thresholds_grid: validation set is empty");
  if (grid.empty()) throw ConfigError("calibrate_thresholds_grid: grid is empty");
  std::sort(grid.begin(), grid.end());
  CalibrationReport report;
  for (auto& cfg : model.if_cfgs) {
    double best_value = grid.front();
    double best_acc = -1.0;
    for (double candidate : grid) {
      IfConfig trial = cfg;
      trial.v_th = candidate;
      trial.validate();
      cfg = trial;
      const double acc = snn_accuracy(model, validation, labels);
      if (acc > best_acc) {
        best_acc = acc;
        best_value = candidate;
      }
    }
    cfg.v_th = best_value;
    report.thresholds.push_back(best_value);
  }
  model.calibration = "grid search over " + std::to_string(grid.size()) + " values on " +
                      std::to_string(validation.size()) + " validation samples";
  return report;
}

// ---------------------------------------------------------------------------
// Model file

inline std::vector<std::uint8_t> serialize_model(const SnnModel& model) {
  ByteWriter out;
  write_weights(out, source_weights(model));
  out.u16(static_cast<std::uint16_t>(model.if_cfgs.size()));
  for (const auto& c : model.if_cfgs) {
    out.f64(c.v_th);
    out.f64(c.v_rest);
    out.f64(c.leak);
    out.u8(static_cast<std::uint8_t>(c.reset));
  }
  const std::string meta = nlohmann::json{{"source_spec", to_json(model.source_spec)},
                                        {"calibration", model.calibration},
                                        {"pooling", std::string(to_string(model.pooling))}}.dump();
  out.u32(static_cast<std::uint32_t>(meta.size()));
  out.raw(meta);
  return out.take();
}

inline SnnModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "model file");
  const WeightContainer cnn_weights = read_weights(in);
  const auto count = in.u16();
  std::vector<IfConfig> cfgs(count);
  for (auto& c : cfgs) {
    c.v_th = in.f64();
    c.v_rest = in.f64();
    c.leak = in.f64();
    const std::size_t at = in.offset();
    const auto mode = in.u8();
    if (mode > 1) throw FormatError("model file: unknown reset mode " + std::to_string(mode), at);
    c.reset = static_cast<ResetMode>(mode);
  }
  const auto meta_len = in.u32();
  const std::size_t meta_at = in.offset();
  const std::string meta_text = in.raw(meta_len);
  if (!in.at_end()) throw FormatError("model file: trailing bytes", in.offset());

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: metadata is not valid JSON: ") + e.what(), meta_at);
  }
  const NetworkSpec source_spec = network_spec_from_json(meta.at("source_spec"));
  if (cnn_weights.fingerprint != fingerprint(source_spec)) {
    throw FormatError("model file: weight fingerprint " + std::to_string(cnn_weights.fingerprint) +
                          " does not match embedded network " + std::to_string(fingerprint(source_spec)),
                      6);
  }
  SnnModel model = map_weights(source_spec, cnn_weights);
  if (cfgs.size() != model.if_cfgs.size()) {
    throw FormatError("model file: " + std::to_string(cfgs.size()) + " IF configs for " +
                          std::to_string(model.if_cfgs.size()) + " neuron layers",
                      meta_at);
  }
  for (const auto& c : cfgs) c.validate();
  model.if_cfgs = std::move(cfgs);
  model.calibration = meta.value("calibration", std::string());
  try {
    model.pooling = parse_pool_mode(meta.value("pooling", std::string("or")));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what(), meta_at);
  }
  return model;
}

inline void save_model(const SnnModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

inline SnnModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("model file not found: " + path.string());
  return deserialize_model(read_file_bytes(path));
}

}  // namespace spikecnn
