#pragma once

// Static computation-complexity accounting for the float and spiking paths,
// plus the accuracy-per-cost figure of merit.
//
// Time complexity over the conv layers, with M_H x M_W the output feature map:
//
//   T_CNN  = sum M_H M_W (K_H K_W + K_H + K_W - 1) C_in C_out * float_factor
//   T_SCNN = sum M_H M_W (K_H + K_W - 1) C_in C_out / spike_divisor * (T / t_ref)
//
// The defaults (float_factor 1.1, spike_divisor 10, t_ref 10) are used as
// given. The reduction computed from them alone does not include the 32-bit
// -> 1-bit dataflow narrowing, so the report also gives a bit-width-aware
// reduction that weights T_CNN by bit_width_factor.
//
// Operation counts follow the same convention as the instrumented kernels in
// cnn.hpp / snn.hpp, so dynamic counters can be compared to them exactly.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spikecnn/errors.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/op_counter.hpp"
#include "spikecnn/text.hpp"

namespace spikecnn {

struct ComplexityOptions {
  double float_factor = 1.1;
  double spike_divisor = 10.0;
  double t_ref = 10.0;
  double bit_width_factor = 32.0;
};

enum class PathMode { cnn, snn };

inline std::string_view to_string(PathMode mode) noexcept { return mode == PathMode::cnn ? "cnn" : "snn"; }

namespace detail {

template <typename F>
double sum_conv_layers(const NetworkSpec& spec, F&& term) {
  const auto shapes = chain_shapes(spec);
  double total = 0.0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* conv = std::get_if<Conv1D>(&spec.layers[i])) {
      const Shape3& out = shapes[i + 1];
      total += term(*conv, static_cast<double>(out.h), static_cast<double>(out.w));
    }
  }
  return total;
}

}  // namespace detail

inline double t_cnn(const NetworkSpec& spec, const ComplexityOptions& opt = {}) {
  return detail::sum_conv_layers(spec, [&](const Conv1D& c, double mh, double mw) {
    const auto kh = static_cast<double>(c.kernel_h);
    const auto kw = static_cast<double>(c.kernel_w);
    return mh * mw * (kh * kw + kh + kw - 1.0) * static_cast<double>(c.c_in) * static_cast<double>(c.c_out) *
           opt.float_factor;
  });
}

inline double t_scnn(const NetworkSpec& spec, std::uint32_t time_steps, const ComplexityOptions& opt = {}) {
  if (time_steps == 0) throw ConfigError("t_scnn requires time_steps >= 1");
  return detail::sum_conv_layers(spec, [&](const Conv1D& c, double mh, double mw) {
    const auto kh = static_cast<double>(c.kernel_h);
    const auto kw = static_cast<double>(c.kernel_w);
    return mh * mw * (kh + kw - 1.0) * static_cast<double>(c.c_in) * static_cast<double>(c.c_out) /
           opt.spike_divisor * (static_cast<double>(time_steps) / opt.t_ref);
  });
}

inline double reduction_percent(double t_cnn_value, double t_scnn_value) {
  if (!(t_cnn_value > 0.0)) throw ConfigError("reduction_percent requires t_cnn > 0");
  return 100.0 * (1.0 - t_scnn_value / t_cnn_value);
}

inline double reduction_percent(const NetworkSpec& spec, std::uint32_t time_steps, const ComplexityOptions& opt = {}) {
  return reduction_percent(t_cnn(spec, opt), t_scnn(spec, time_steps, opt));
}

struct LayerOpCount {
  std::size_t layer_index = 0;
  std::string kind;
  OpTally ops;                      // synaptic arithmetic and pooling
  std::uint64_t membrane_adds = 0;  // snn only: one integrate per neuron per step
};

struct OpCountReport {
  PathMode mode = PathMode::cnn;
  std::uint32_t time_steps = 1;
  double t_cnn = 0.0;
  double t_scnn = 0.0;
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t memory_bits = 0;
  std::uint64_t activation_bits = 0;
  std::uint64_t weight_count = 0;
  double reduction_percent = 0.0;           // literal formulas
  double bitwise_reduction_percent = 0.0;   // T_CNN weighted by bit_width_factor
  std::vector<LayerOpCount> layers;
};

inline std::uint64_t weight_count(const NetworkSpec& spec) {
  std::uint64_t n = 0;
  for (const auto& layer : spec.layers) {
    if (!has_parameters(layer)) continue;
    n += Tensor<float>::element_count(weight_dims(layer)) + Tensor<float>::element_count(bias_dims(layer));
  }
  return n;
}

// Activation storage: the input plus every layer output, 32 bits per value on
// the float path and 1 bit per spike per time step on the spiking path.
inline std::uint64_t activation_bits(const NetworkSpec& spec, PathMode mode, std::uint32_t time_steps) {
  const NetworkSpec counted = mode == PathMode::snn ? spiking_variant(spec) : spec;
  std::uint64_t values = 0;
  for (const auto& s : chain_shapes(counted)) values += s.size();
  return mode == PathMode::cnn ? 32 * values : values * time_steps;
}

inline OpCountReport static_op_counts(const NetworkSpec& spec, PathMode mode, std::uint32_t time_steps,
                                      const ComplexityOptions& opt = {}) {
  if (time_steps == 0) throw ConfigError("static_op_counts requires time_steps >= 1");
  const NetworkSpec counted = mode == PathMode::snn ? spiking_variant(spec) : spec;
  const auto shapes = chain_shapes(counted);
  const std::uint64_t reps = mode == PathMode::snn ? time_steps : 1;

  OpCountReport r;
  r.mode = mode;
  r.time_steps = time_steps;
  for (std::size_t i = 0; i < counted.layers.size(); ++i) {
    const Layer& layer = counted.layers[i];
    const std::uint64_t outputs = shapes[i + 1].size();
    LayerOpCount lc{i, layer_name(layer), {}, 0};
    std::uint64_t fan_in = 0;
    if (const auto* conv = std::get_if<Conv1D>(&layer)) fan_in = conv->length() * conv->c_in;
    if (const auto* fc = std::get_if<FullyConnected>(&layer)) fan_in = fc->in_dim;
    if (fan_in > 0) {
      lc.ops.adds = outputs * fan_in * reps;
      lc.ops.muls = mode == PathMode::cnn ? outputs * fan_in : 0;
      if (mode == PathMode::snn) lc.membrane_adds = outputs * reps;
    } else if (const auto* pool = std::get_if<MaxPool1D>(&layer)) {
      lc.ops.adds = outputs * (pool->window - 1) * reps;
    }
    r.adds += lc.ops.adds + lc.membrane_adds;
    r.muls += lc.ops.muls;
    r.layers.push_back(std::move(lc));
  }
  r.weight_count = weight_count(spec);
  r.activation_bits = activation_bits(spec, mode, time_steps);
  r.memory_bits = 32 * r.weight_count + r.activation_bits;
  r.t_cnn = t_cnn(spec, opt);
  r.t_scnn = t_scnn(spec, time_steps, opt);
  if (r.t_cnn > 0.0) {
    r.reduction_percent = reduction_percent(r.t_cnn, r.t_scnn);
    r.bitwise_reduction_percent = reduction_percent(r.t_cnn * opt.bit_width_factor, r.t_scnn);
  }
  return r;
}

// (SEN + AUC - FPR) / (2 (10 MUL + ADD + Mem)); rates as fractions, costs as raw counts.
inline double fom(double sen, double auc, double fpr, double mul, double add, double mem) {
  for (double v : {sen, auc, fpr}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("fom: sen, auc and fpr must be fractions in [0, 1]");
  }
  if (mul < 0.0 || add < 0.0 || mem < 0.0) throw ConfigError("fom: operation counts must be non-negative");
  const double denom = 2.0 * (10.0 * mul + add + mem);
  if (!(denom > 0.0)) throw ConfigError("fom: zero denominator (all cost counts are zero)");
  return (sen + auc - fpr) / denom;
}

// ---------------------------------------------------------------------------
// Report output

inline std::string to_key_value(const OpCountReport& r) {
  std::ostringstream out;
  out << "mode=" << to_string(r.mode) << '\n'
      << "time_steps=" << r.time_steps << '\n'
      << "t_cnn=" << format_double(r.t_cnn) << '\n'
      << "t_scnn=" << format_double(r.t_scnn) << '\n'
      << "adds=" << r.adds << '\n'
      << "muls=" << r.muls << '\n'
      << "memory_bits=" << r.memory_bits << '\n'
      << "activation_bits=" << r.activation_bits << '\n'
      << "weight_count=" << r.weight_count << '\n'
      << "reduction_percent=" << format_double(r.reduction_percent) << '\n'
      << "bitwise_reduction_percent=" << format_double(r.bitwise_reduction_percent) << '\n';
  return out.str();
}

inline nlohmann::json to_json(const OpCountReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer_index},
                      {"kind", l.kind},
                      {"adds", l.ops.adds},
                      {"muls", l.ops.muls},
                      {"membrane_adds", l.membrane_adds}});
  }
  return {{"mode", std::string(to_string(r.mode))},
          {"time_steps", r.time_steps},
          {"t_cnn", r.t_cnn},
          {"t_scnn", r.t_scnn},
          {"adds", r.adds},
          {"muls", r.muls},
          {"memory_bits", r.memory_bits},
          {"activation_bits", r.activation_bits},
          {"weight_count", r.weight_count},
          {"reduction_percent", r.reduction_percent},
          {"bitwise_reduction_percent", r.bitwise_reduction_percent},
          {"layers", layers}};
}

}  // namespace spikecnn
