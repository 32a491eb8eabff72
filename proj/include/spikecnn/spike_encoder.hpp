#pragma once

// Temporal Gaussian random sparse encoding.
//
// A [C,H,W] float sample becomes a [T,C,H,W] binary train. At every time step
// a Gaussian matrix with mean (v_th_up + v_th_down) / 2 is drawn, and an
// element spikes when the sample value is at least the drawn value. The
// expected spike rate of a value x is therefore Phi((x - mean) / sigma).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "spikecnn/binary_io.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/random.hpp"
#include "spikecnn/tensor.hpp"

namespace spikecnn {

struct EncoderConfig {
  std::uint32_t time_steps = 10;
  double v_th_up = 1.0;
  double v_th_down = -1.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  [[nodiscard]] double mean() const noexcept { return 0.5 * (v_th_up + v_th_down); }

  void validate() const {
    if (time_steps == 0) throw ConfigError("encoder time_steps must be >= 1");
    if (!(v_th_up > v_th_down)) throw ConfigError("encoder requires v_th_up > v_th_down");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("encoder sigma must be a positive finite number");
  }
};

// Config whose sigma places both thresholds one standard deviation from the mean.
inline EncoderConfig make_encoder_config(std::uint32_t time_steps, double v_th_up, double v_th_down,
                                         std::uint64_t seed) {
  return EncoderConfig{time_steps, v_th_up, v_th_down, 0.5 * (v_th_up - v_th_down), seed};
}

// Binary [T,C,H,W] tensor, bit-packed row-major, least significant bit first.
class SpikeTrain {
 public:
  SpikeTrain() = default;

  SpikeTrain(std::uint32_t time_steps, Shape3 frame) : steps_(time_steps), frame_(frame) {
    bits_.assign((bit_count() + 7) / 8, 0);
  }

  [[nodiscard]] std::uint32_t time_steps() const noexcept { return steps_; }
  [[nodiscard]] const Shape3& frame() const noexcept { return frame_; }
  [[nodiscard]] std::size_t bit_count() const noexcept { return std::size_t{steps_} * frame_.size(); }
  [[nodiscard]] const std::vector<std::uint8_t>& packed() const noexcept { return bits_; }

  [[nodiscard]] bool get(std::size_t t, std::size_t flat) const noexcept {
    const std::size_t i = t * frame_.size() + flat;
    return (bits_[i >> 3] >> (i & 7)) & 1U;
  }

  [[nodiscard]] bool get(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return get(t, (c * frame_.h + h) * frame_.w + w);
  }

  void set(std::size_t t, std::size_t flat, bool value) noexcept {
    const std::size_t i = t * frame_.size() + flat;
    const auto mask = static_cast<std::uint8_t>(1U << (i & 7));
    if (value) {
      bits_[i >> 3] |= mask;
    } else {
      bits_[i >> 3] &= static_cast<std::uint8_t>(~mask);
    }
  }

  // One time step unpacked to 0/1 bytes.
  [[nodiscard]] Tensor<std::uint8_t> frame_at(std::size_t t) const {
    Tensor<std::uint8_t> out(frame_);
    for (std::size_t i = 0; i < frame_.size(); ++i) out[i] = get(t, i) ? 1 : 0;
    return out;
  }

  friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;

 private:
  std::uint32_t steps_ = 0;
  Shape3 frame_{};
  std::vector<std::uint8_t> bits_;
};

inline SpikeTrain encode(const Tensor<double>& sample, const EncoderConfig& cfg) {
  cfg.validate();
  if (!sample.all_finite()) throw InputError("encode: sample contains a non-finite value");
  const Shape3 frame = sample.shape3();
  SpikeTrain train(cfg.time_steps, frame);
  const double mu = cfg.mean();
  const auto values = sample.values();
  for (std::uint32_t t = 0; t < cfg.time_steps; ++t) {
    Rng rng(derive_seed(cfg.seed, t));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = rng.normal(mu, cfg.sigma);
      train.set(t, i, values[i] >= g);
    }
  }
  return train;
}

inline Tensor<double> spike_rate(const SpikeTrain& train) {
  Tensor<double> rate(train.frame());
  const std::size_t n = train.frame().size();
  for (std::size_t t = 0; t < train.time_steps(); ++t) {
    for (std::size_t i = 0; i < n; ++i) rate[i] += train.get(t, i) ? 1.0 : 0.0;
  }
  const double inv = train.time_steps() > 0 ? 1.0 / train.time_steps() : 0.0;
  for (auto& v : rate.values()) v *= inv;
  return rate;
}

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double expected_rate(double x, const EncoderConfig& cfg) {
  return standard_normal_cdf((x - cfg.mean()) / cfg.sigma);
}

// Elementwise expected_rate; the value domain the spiking network sees on average.
inline Tensor<double> expected_rate(const Tensor<double>& sample, const EncoderConfig& cfg) {
  Tensor<double> out(sample.dims());
  for (std::size_t i = 0; i < sample.size(); ++i) out[i] = expected_rate(sample[i], cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Packed dump: "SPKT", u32 version, u32 T, C, H, W, then the packed bits.

inline constexpr std::uint32_t kSpikeTrainVersion = 1;

inline std::vector<std::uint8_t> serialize_spike_train(const SpikeTrain& train) {
  ByteWriter out;
  out.raw("SPKT");
  out.u32(kSpikeTrainVersion);
  out.u32(train.time_steps());
  out.u32(static_cast<std::uint32_t>(train.frame().c));
  out.u32(static_cast<std::uint32_t>(train.frame().h));
  out.u32(static_cast<std::uint32_t>(train.frame().w));
  out.raw(train.packed());
  return out.take();
}

inline SpikeTrain deserialize_spike_train(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "spike train");
  in.expect_magic("SPKT");
  const std::size_t version_at = in.offset();
  const auto version = in.u32();
  if (version != kSpikeTrainVersion) {
    throw UnsupportedError("spike train version " + std::to_string(version) + " is not supported (offset " +
                           std::to_string(version_at) + ")");
  }
  const auto t = in.u32();
  const Shape3 frame{in.u32(), in.u32(), in.u32()};
  SpikeTrain train(t, frame);
  const std::size_t payload = (train.bit_count() + 7) / 8;
  const auto bits = in.span(payload);
  for (std::size_t i = 0; i < train.bit_count(); ++i) {
    const std::size_t step = i / frame.size();
    train.set(step, i % frame.size(), (bits[i >> 3] >> (i & 7)) & 1U);
  }
  if (!in.at_end()) throw FormatError("spike train: trailing bytes", in.offset());
  return train;
}

inline void save_spike_train(const SpikeTrain& train, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_spike_train(train));
}

inline SpikeTrain load_spike_train(const std::filesystem::path& path) {
  return deserialize_spike_train(read_file_bytes(path));
}

}  // namespace spikecnn
