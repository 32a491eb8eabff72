#pragma once

// Per-layer weights and biases, and the "SCNW" container format.
//
//   "SCNW" | u16 version = 1 | u32 spec fingerprint | u16 layer count
//   per layer: u16 layer index
//              weight tensor: u8 rank | rank x u32 dims | f32 payload
//              bias tensor:   u8 rank | rank x u32 dims | f32 payload
//
// All integers and floats are little-endian.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spikecnn/binary_io.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/random.hpp"
#include "spikecnn/tensor.hpp"

namespace spikecnn {

template <typename T>
struct LayerParams {
  std::size_t layer_index = 0;
  Tensor<T> weights;
  Tensor<T> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
struct NetworkWeights {
  std::uint32_t fingerprint = 0;
  std::vector<LayerParams<T>> layers;

  [[nodiscard]] const LayerParams<T>* find(std::size_t layer_index) const {
    for (const auto& p : layers) {
      if (p.layer_index == layer_index) return &p;
    }
    return nullptr;
  }

  [[nodiscard]] LayerParams<T>* find(std::size_t layer_index) {
    for (auto& p : layers) {
      if (p.layer_index == layer_index) return &p;
    }
    return nullptr;
  }

  [[nodiscard]] const LayerParams<T>& at(std::size_t layer_index) const {
    if (const auto* p = find(layer_index)) return *p;
    throw StructuralError("missing weights for layer " + std::to_string(layer_index));
  }

  template <typename U>
  [[nodiscard]] NetworkWeights<U> cast() const {
    NetworkWeights<U> out{fingerprint, {}};
    for (const auto& p : layers) out.layers.push_back({p.layer_index, p.weights.template cast<U>(), p.bias.template cast<U>()});
    return out;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : layers) n += p.weights.size() + p.bias.size();
    return n;
  }

  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

// 32-bit float weights as stored on disk.
using WeightContainer = NetworkWeights<float>;

template <typename T>
NetworkWeights<T> zero_weights(const NetworkSpec& spec) {
  chain_shapes(spec);
  NetworkWeights<T> w{fingerprint(spec), {}};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!has_parameters(spec.layers[i])) continue;
    w.layers.push_back({i, Tensor<T>(weight_dims(spec.layers[i])), Tensor<T>(bias_dims(spec.layers[i]))});
  }
  return w;
}

// He-normal weights, zero biases.
template <typename T>
NetworkWeights<T> init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  auto w = zero_weights<T>(spec);
  for (auto& p : w.layers) {
    const auto& dims = p.weights.dims();
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < dims.size(); ++d) fan_in *= dims[d];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, p.layer_index));
    for (auto& v : p.weights.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  }
  return w;
}

// Throws unless every parameterised layer of spec has finite weights of the right shape.
template <typename T>
void validate_weights(const NetworkSpec& spec, const NetworkWeights<T>& w, std::optional<std::uint32_t> expected = {}) {
  const std::uint32_t want = expected.value_or(fingerprint(spec));
  if (w.fingerprint != want) {
    throw StructuralError("weight fingerprint " + std::to_string(w.fingerprint) + " does not match network " +
                          std::to_string(want));
  }
  chain_shapes(spec);
  std::size_t expected_layers = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!has_parameters(spec.layers[i])) continue;
    ++expected_layers;
    const auto& p = w.at(i);
    if (p.weights.dims() != weight_dims(spec.layers[i]) || p.bias.dims() != bias_dims(spec.layers[i])) {
      throw StructuralError("weights for layer " + std::to_string(i) + " have the wrong shape");
    }
    if (!p.weights.all_finite() || !p.bias.all_finite()) {
      throw InputError("weights for layer " + std::to_string(i) + " contain non-finite values");
    }
  }
  if (expected_layers != w.layers.size()) throw StructuralError("weight container has extra layers");
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::uint16_t kWeightFormatVersion = 1;

namespace detail {

inline void write_tensor(ByteWriter& out, const Tensor<float>& t) {
  out.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) out.u32(static_cast<std::uint32_t>(d));
  for (float v : t.values()) out.f32(v);
}

inline Tensor<float> read_tensor(ByteReader& in) {
  const auto rank = in.u8();
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = in.u32();
  const std::size_t n = Tensor<float>::element_count(dims);
  in.require(n * 4);
  std::vector<float> data(n);
  for (auto& v : data) v = in.f32();
  return Tensor<float>(std::move(dims), std::move(data));
}

}  // namespace detail

inline void write_weights(ByteWriter& out, const WeightContainer& w) {
  out.raw("SCNW");
  out.u16(kWeightFormatVersion);
  out.u32(w.fingerprint);
  out.u16(static_cast<std::uint16_t>(w.layers.size()));
  for (const auto& p : w.layers) {
    out.u16(static_cast<std::uint16_t>(p.layer_index));
    detail::write_tensor(out, p.weights);
    detail::write_tensor(out, p.bias);
  }
}

inline WeightContainer read_weights(ByteReader& in) {
  in.expect_magic("SCNW");
  const std::size_t version_at = in.offset();
  const auto version = in.u16();
  if (version != kWeightFormatVersion) {
    throw UnsupportedError("weight format version " + std::to_string(version) + " is not supported, expected " +
                           std::to_string(kWeightFormatVersion) + " (offset " + std::to_string(version_at) + ")");
  }
  WeightContainer w;
  w.fingerprint = in.u32();
  const auto count = in.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    LayerParams<float> p;
    p.layer_index = in.u16();
    p.weights = detail::read_tensor(in);
    p.bias = detail::read_tensor(in);
    w.layers.push_back(std::move(p));
  }
  return w;
}

inline std::vector<std::uint8_t> serialize_weights(const WeightContainer& w) {
  ByteWriter out;
  write_weights(out, w);
  return out.take();
}

inline WeightContainer deserialize_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "weight container");
  auto w = read_weights(in);
  if (!in.at_end()) throw FormatError("weight container: trailing bytes", in.offset());
  return w;
}

inline void save_weights(const WeightContainer& w, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_weights(w));
}

inline WeightContainer load_weights(const std::filesystem::path& path) {
  return deserialize_weights(read_file_bytes(path));
}

}  // namespace spikecnn
