#pragma once

// Time-stepped spiking CNN built from integrate-and-fire neurons.
//
// Each time step a binary frame is pushed through the layers. Conv and fc
// layers turn incoming spikes into a weighted input using additions only,
// and an IF neuron per output integrates it:
//
//   V <- V + input - leak      (leak never pulls V below v_rest)
//   V >= v_th  ->  spike, then V <- v_rest        (to_rest)
//                          or V <- V - v_th       (subtract_threshold)
//
// Max-pool layers either OR the spikes in each window (default) or pass on
// the spike of the window's input with the highest running spike count so far
// (rate-gated; first index on ties). The last layer's spikes are tallied per
// output neuron across all time steps.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spikecnn/cnn.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/label.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/op_counter.hpp"
#include "spikecnn/spike_encoder.hpp"
#include "spikecnn/tensor.hpp"
#include "spikecnn/weights.hpp"

namespace spikecnn {

enum class ResetMode : std::uint8_t { to_rest = 0, subtract_threshold = 1 };

inline std::string_view to_string(ResetMode mode) noexcept {
  return mode == ResetMode::to_rest ? "to_rest" : "subtract_threshold";
}

struct IfConfig {
  double v_th = 1.0;
  double v_rest = 0.0;
  double leak = 0.0;
  ResetMode reset = ResetMode::to_rest;

  void validate() const {
    if (!(v_th > v_rest)) throw ConfigError("IF neuron requires v_th > v_rest");
    if (!(leak >= 0.0)) throw ConfigError("IF neuron leak must be >= 0");
  }

  friend bool operator==(const IfConfig&, const IfConfig&) = default;
};

struct MembraneState {
  Tensor<double> potentials;

  static MembraneState at_rest(const Shape3& shape, const IfConfig& cfg) {
    return MembraneState{Tensor<double>(shape, cfg.v_rest)};
  }
};

using SpikeFrame = Tensor<std::uint8_t>;

// One integration step, updating `state` in place. Returns the emitted spikes.
template <typename W>
SpikeFrame if_step_inplace(MembraneState& state, const Tensor<W>& weighted_input, const IfConfig& cfg,
                           OpTally* ops = nullptr) {
  if (state.potentials.size() != weighted_input.size()) {
    throw StructuralError("if_step: weighted input size " + std::to_string(weighted_input.size()) +
                          " does not match membrane size " + std::to_string(state.potentials.size()));
  }
  SpikeFrame spikes(state.potentials.dims());
  auto v = state.potentials.values();
  const auto in = weighted_input.values();
  std::uint64_t fired = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double p = v[i] + static_cast<double>(in[i]);
    if (cfg.leak > 0.0 && p > cfg.v_rest) p = std::max(p - cfg.leak, cfg.v_rest);
    if (p >= cfg.v_th) {
      spikes[i] = 1;
      p = cfg.reset == ResetMode::to_rest ? cfg.v_rest : p - cfg.v_th;
      ++fired;
    }
    v[i] = p;
  }
  if (ops != nullptr) {
    const std::uint64_t n = v.size();
    ops->adds += n * (cfg.leak > 0.0 ? 2 : 1);
    ops->compares += n;
    if (cfg.reset == ResetMode::subtract_threshold) ops->adds += fired;
  }
  return spikes;
}

template <typename W>
std::pair<MembraneState, SpikeFrame> if_step(MembraneState state, const Tensor<W>& weighted_input,
                                             const IfConfig& cfg) {
  auto spikes = if_step_inplace(state, weighted_input, cfg);
  return {std::move(state), std::move(spikes)};
}

// Weighted input of a conv layer from binary spikes: per output, the sum of the
// weights whose input spiked, plus bias. Accumulation order matches
// conv1d_forward, so the result equals the float convolution of the 0/1
// tensor bit for bit.
template <typename W>
Tensor<W> spiking_conv1d(const SpikeFrame& spikes, const Conv1D& conv, const Tensor<W>& weights, const Tensor<W>& bias,
                         OpTally* ops = nullptr) {
  detail::check_conv_params(conv, weights, bias);
  const detail::ConvGeometry g(conv, spikes.shape3());
  Tensor<W> out(g.out);
  const std::uint8_t* s = spikes.values().data();
  const W* w = weights.values().data();
  W* y = out.values().data();
  for (std::size_t co = 0; co < g.out.c; ++co) {
    for (std::size_t oh = 0; oh < g.out.h; ++oh) {
      for (std::size_t ow = 0; ow < g.out.w; ++ow) {
        W acc = W(0);
        for (std::size_t ci = 0; ci < conv.c_in; ++ci) {
          const std::uint8_t* sp = s + g.input_base(ci, oh, ow);
          const W* wp = w + (co * conv.c_in + ci) * g.kernel;
          for (std::size_t k = 0; k < g.kernel; ++k) acc += sp[k * g.kstep] != 0 ? wp[k] : W(0);
        }
        *y++ = acc + bias[co];
      }
    }
  }
  if (ops != nullptr) ops->adds += g.out.size() * g.fan_in;
  return out;
}

template <typename W>
Tensor<W> spiking_fc(const SpikeFrame& spikes, const Tensor<W>& weights, const Tensor<W>& bias, OpTally* ops = nullptr) {
  detail::check_fc_params(spikes.size(), weights, bias);
  const std::size_t out_dim = weights.dims()[0];
  const std::size_t in_dim = weights.dims()[1];
  Tensor<W> out(Shape3{out_dim, 1, 1});
  const std::uint8_t* s = spikes.values().data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const W* wr = weights.values().data() + o * in_dim;
    W acc = W(0);
    for (std::size_t i = 0; i < in_dim; ++i) acc += s[i] != 0 ? wr[i] : W(0);
    out[o] = acc + bias[o];
  }
  if (ops != nullptr) ops->adds += out_dim * in_dim;
  return out;
}

// OR over non-overlapping windows along the pooled axis.
inline SpikeFrame spiking_maxpool(const SpikeFrame& spikes, const MaxPool1D& pool, OpTally* ops = nullptr) {
  const Shape3 in = spikes.shape3();
  const Shape3 os = output_shape(Layer{pool}, in);
  SpikeFrame out(os);
  const bool along_width = pool.orientation == Axis::width;
  const std::size_t step = along_width ? 1 : in.w;
  std::size_t o = 0;
  for (std::size_t c = 0; c < os.c; ++c) {
    for (std::size_t h = 0; h < os.h; ++h) {
      for (std::size_t w = 0; w < os.w; ++w, ++o) {
        const std::size_t base =
            along_width ? (c * in.h + h) * in.w + w * pool.window : (c * in.h + h * pool.window) * in.w + w;
        std::uint8_t any = 0;
        for (std::size_t k = 0; k < pool.window; ++k) any |= spikes[base + k * step];
        out[o] = any;
      }
    }
  }
  if (ops != nullptr) ops->adds += os.size() * (pool.window - 1);
  return out;
}

enum class PoolMode : std::uint8_t { or_spikes = 0, rate_gated = 1 };

inline std::string_view to_string(PoolMode mode) noexcept {
  return mode == PoolMode::or_spikes ? "or" : "rate_gated";
}

inline PoolMode parse_pool_mode(std::string_view s) {
  if (s == "or") return PoolMode::or_spikes;
  if (s == "rate_gated") return PoolMode::rate_gated;
  throw ConfigError("unknown pooling mode \"" + std::string(s) + "\" (expected or or rate_gated)");
}

// Rate-gated pooling. `counts` holds the running spike count of every input
// position and is updated with this frame before gating.
inline SpikeFrame spiking_maxpool_gated(const SpikeFrame& spikes, const MaxPool1D& pool, std::vector<std::uint32_t>& counts,
                                       OpTally* ops = nullptr) {
  const Shape3 in = spikes.shape3();
  const Shape3 os = output_shape(Layer{pool}, in);
  if (counts.size() != in.size()) throw StructuralError("gated pool state does not match its input");
  for (std::size_t i = 0; i < in.size(); ++i) counts[i] += spikes[i];
  SpikeFrame out(os);
  const bool along_width = pool.orientation == Axis::width;
  const std::size_t step = along_width ? 1 : in.w;
  std::size_t o = 0;
  for (std::size_t c = 0; c < os.c; ++c) {
    for (std::size_t h = 0; h < os.h; ++h) {
      for (std::size_t w = 0; w < os.w; ++w, ++o) {
        const std::size_t base =
            along_width ? (c * in.h + h) * in.w + w * pool.window : (c * in.h + h * pool.window) * in.w + w;
        std::size_t best = base;
        for (std::size_t k = 1; k < pool.window; ++k) {
          if (counts[base + k * step] > counts[best]) best = base + k * step;
        }
        out[o] = spikes[best];
      }
    }
  }
  if (ops != nullptr) {
    ops->adds += in.size();
    ops->compares += os.size() * (pool.window - 1);
  }
  return out;
}

inline SpikeFrame spiking_maxpool(const SpikeFrame& spikes, std::size_t window) {
  if (window < 1) throw StructuralError("spiking max-pool window must be >= 1");
  return spiking_maxpool(spikes, MaxPool1D{window, Axis::width});
}

struct SpikeCounts {
  std::vector<std::uint32_t> counts;  // one per output neuron
  std::uint32_t time_steps = 0;

  [[nodiscard]] std::uint32_t preictal() const { return counts.at(kPreictalNeuron); }
  [[nodiscard]] std::uint32_t interictal() const { return counts.at(kInterictalNeuron); }
  friend bool operator==(const SpikeCounts&, const SpikeCounts&) = default;
};

// Number of IF neuron layers (conv and fc) in a spec.
inline std::size_t neuron_layer_count(const NetworkSpec& spec) {
  return static_cast<std::size_t>(std::count_if(spec.layers.begin(), spec.layers.end(), has_parameters));
}

// Shape-only check: weights indexed by this spec's layers, fingerprint not compared.
inline void check_spiking_inputs(const NetworkSpec& spec, const WeightContainer& weights,
                                 const std::vector<IfConfig>& if_cfgs) {
  for (const auto& layer : spec.layers) {
    if (std::holds_alternative<Relu>(layer)) {
      throw StructuralError("spiking network spec must not contain relu layers (IF neurons replace them)");
    }
  }
  validate_weights(spec, weights, weights.fingerprint);
  if (if_cfgs.size() != neuron_layer_count(spec)) {
    throw StructuralError("expected " + std::to_string(neuron_layer_count(spec)) + " IF configs, got " +
                          std::to_string(if_cfgs.size()));
  }
  for (const auto& c : if_cfgs) c.validate();
}

// Runs `train` through the spiking network. Membranes start at v_rest and
// persist across time steps.
inline SpikeCounts run_network(const NetworkSpec& spec, const WeightContainer& weights, const SpikeTrain& train,
                               const std::vector<IfConfig>& if_cfgs, OpCounter* counter = nullptr,
                               PoolMode pooling = PoolMode::or_spikes) {
  check_spiking_inputs(spec, weights, if_cfgs);
  if (train.frame() != spec.input) {
    throw StructuralError("spike train frame " + to_string(train.frame()) + " does not match network input " +
                          to_string(spec.input));
  }
  const auto shapes = chain_shapes(spec);
  std::vector<MembraneState> membranes;
  std::vector<std::size_t> neuron_slot(spec.layers.size(), 0);
  for (std::size_t i = 0, slot = 0; i < spec.layers.size(); ++i) {
    if (!has_parameters(spec.layers[i])) continue;
    neuron_slot[i] = slot;
    membranes.push_back(MembraneState::at_rest(shapes[i + 1], if_cfgs[slot]));
    ++slot;
  }
  std::vector<std::vector<std::uint32_t>> pool_counts(spec.layers.size());
  if (pooling == PoolMode::rate_gated) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (std::holds_alternative<MaxPool1D>(spec.layers[i])) pool_counts[i].assign(shapes[i].size(), 0);
    }
  }

  SpikeCounts result{std::vector<std::uint32_t>(shapes.back().size(), 0), train.time_steps()};
  OpTally* membrane_ops = counter != nullptr ? &counter->membrane() : nullptr;
  for (std::uint32_t t = 0; t < train.time_steps(); ++t) {
    SpikeFrame x = train.frame_at(t);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      OpTally* ops = counter != nullptr ? &counter->layer(i) : nullptr;
      const Layer& layer = spec.layers[i];
      if (const auto* pool = std::get_if<MaxPool1D>(&layer)) {
        x = pooling == PoolMode::or_spikes ? spiking_maxpool(x, *pool, ops)
                                           : spiking_maxpool_gated(x, *pool, pool_counts[i], ops);
        continue;
      }
      const auto& p = weights.at(i);
      const Tensor<float> current = std::holds_alternative<Conv1D>(layer)
                                        ? spiking_conv1d(x, std::get<Conv1D>(layer), p.weights, p.bias, ops)
                                        : spiking_fc(x, p.weights, p.bias, ops);
      const std::size_t slot = neuron_slot[i];
      x = if_step_inplace(membranes[slot], current, if_cfgs[slot], membrane_ops);
    }
    for (std::size_t o = 0; o < x.size(); ++o) result.counts[o] += x[o];
  }
  return result;
}

enum class TieBreak { interictal, preictal };

// Preictal iff count_P - count_I exceeds the threshold. A margin exactly at the
// threshold goes to `tie`.
inline Label decide(const SpikeCounts& counts, std::int64_t count_threshold, TieBreak tie = TieBreak::interictal) {
  if (counts.counts.size() != 2) throw StructuralError("decide expects two-class spike counts");
  const std::int64_t margin = static_cast<std::int64_t>(counts.preictal()) - static_cast<std::int64_t>(counts.interictal());
  if (margin > count_threshold) return Label::preictal;
  if (margin == count_threshold && tie == TieBreak::preictal) return Label::preictal;
  return Label::interictal;
}

inline double score(const SpikeCounts& counts, std::uint32_t time_steps) {
  if (time_steps == 0) throw ConfigError("score requires time_steps >= 1");
  return (static_cast<double>(counts.preictal()) - static_cast<double>(counts.interictal())) /
         static_cast<double>(time_steps);
}

inline double score(const SpikeCounts& counts) { return score(counts, counts.time_steps); }

}  // namespace spikecnn
