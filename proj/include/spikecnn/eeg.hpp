#pragma once

// EEG recordings, seizure annotations, preictal/interictal labelling, window
// extraction, train/test splitting and a synthetic recording generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikecnn/binary_io.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/label.hpp"
#include "spikecnn/random.hpp"
#include "spikecnn/tensor.hpp"
#include "spikecnn/text.hpp"

namespace spikecnn {

struct EegRecording {
  std::size_t channels = 0;
  double sample_rate = 256.0;
  std::vector<double> samples;  // channel-major: samples[ch * n + i]
  std::vector<std::string> channel_labels;

  [[nodiscard]] std::size_t sample_count() const noexcept { return channels == 0 ? 0 : samples.size() / channels; }
  [[nodiscard]] double duration_s() const noexcept { return static_cast<double>(sample_count()) / sample_rate; }
  [[nodiscard]] double at(std::size_t ch, std::size_t i) const noexcept { return samples[ch * sample_count() + i]; }

  void validate() const {
    if (channels == 0) throw InputError("recording has no channels");
    if (!(sample_rate > 0.0)) throw InputError("recording sample rate must be positive");
    if (samples.size() % channels != 0) throw InputError("recording sample matrix is ragged");
    for (double v : samples) {
      if (!std::isfinite(v)) throw InputError("recording contains non-finite samples");
    }
  }
};

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;

  [[nodiscard]] double length() const noexcept { return end_s - start_s; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct Seizure {
  double onset_s = 0.0;
  double offset_s = 0.0;
  friend bool operator==(const Seizure&, const Seizure&) = default;
};

using SeizureAnnotations = std::vector<Seizure>;

// Throws unless seizures are sorted, non-overlapping, have onset < offset and
// lie within [0, duration_s].
inline void validate_annotations(const SeizureAnnotations& seizures, double duration_s) {
  for (std::size_t i = 0; i < seizures.size(); ++i) {
    const auto& s = seizures[i];
    if (!(s.onset_s < s.offset_s)) {
      throw InputError("seizure " + std::to_string(i) + ": onset " + format_double(s.onset_s) +
                       " is not before offset " + format_double(s.offset_s));
    }
    if (s.onset_s < 0.0 || s.offset_s > duration_s) {
      throw InputError("seizure " + std::to_string(i) + " [" + format_double(s.onset_s) + ", " +
                       format_double(s.offset_s) + "] lies outside the recording (0 to " +
                       format_double(duration_s) + " s)");
    }
    if (i > 0 && s.onset_s < seizures[i - 1].offset_s) {
      throw InputError("seizure " + std::to_string(i) + " overlaps or precedes seizure " + std::to_string(i - 1));
    }
  }
}

// ---------------------------------------------------------------------------
// Interval sets

namespace detail {

inline std::vector<Interval> normalise(std::vector<Interval> v) {
  std::erase_if(v, [](const Interval& i) { return !(i.end_s > i.start_s); });
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.start_s < b.start_s; });
  std::vector<Interval> out;
  for (const auto& i : v) {
    if (!out.empty() && i.start_s <= out.back().end_s) {
      out.back().end_s = std::max(out.back().end_s, i.end_s);
    } else {
      out.push_back(i);
    }
  }
  return out;
}

inline std::vector<Interval> subtract(const std::vector<Interval>& from, const std::vector<Interval>& cuts) {
  std::vector<Interval> out;
  const auto merged = normalise(cuts);
  for (const auto& base : from) {
    double cursor = base.start_s;
    for (const auto& c : merged) {
      if (c.end_s <= cursor || c.start_s >= base.end_s) continue;
      if (c.start_s > cursor) out.push_back({cursor, c.start_s});
      cursor = std::max(cursor, c.end_s);
    }
    if (cursor < base.end_s) out.push_back({cursor, base.end_s});
  }
  return normalise(out);
}

}  // namespace detail

struct IntervalParams {
  double pil_s = 1800.0;
  double sph_s = 300.0;
  double lead_gap_s = 14400.0;
};

struct IntervalPlan {
  std::vector<Interval> preictal;
  std::vector<Interval> interictal;
  std::vector<Interval> excluded;
  std::vector<std::size_t> lead_seizures;  // indices into the annotations
  IntervalParams params;
};

// A seizure is a lead seizure when it starts at least lead_gap_s after the
// previous seizure ended (the first seizure always is). Only lead seizures get
// a preictal interval [onset - sph - pil, onset - sph]. Interictal time is at
// least lead_gap_s from every seizure in both directions. Everything else is
// excluded, including ictal periods, the SPH and onset..offset + sph_s.
inline IntervalPlan label_intervals(const SeizureAnnotations& seizures, double duration_s,
                                    const IntervalParams& params = {}) {
  if (!(duration_s > 0.0)) throw InputError("recording duration must be positive");
  if (params.pil_s <= 0.0 || params.sph_s < 0.0 || params.lead_gap_s < 0.0) {
    throw ConfigError("interval parameters must be non-negative (pil_s positive)");
  }
  validate_annotations(seizures, duration_s);
  IntervalPlan plan;
  plan.params = params;
  const std::vector<Interval> whole{{0.0, duration_s}};

  std::vector<Interval> near_seizure;
  std::vector<Interval> preictal;
  for (std::size_t i = 0; i < seizures.size(); ++i) {
    const auto& s = seizures[i];
    near_seizure.push_back({s.onset_s - params.lead_gap_s, s.offset_s + params.lead_gap_s});
    const bool lead = i == 0 || s.onset_s - seizures[i - 1].offset_s >= params.lead_gap_s;
    if (!lead) continue;
    plan.lead_seizures.push_back(i);
    const double start = std::max(0.0, s.onset_s - params.sph_s - params.pil_s);
    const double end = std::min(duration_s, s.onset_s - params.sph_s);
    if (end > start) preictal.push_back({start, end});
  }
  // No preictal time may fall inside another seizure's ictal/post-ictal span.
  std::vector<Interval> seizure_spans;
  for (const auto& s : seizures) seizure_spans.push_back({s.onset_s - params.sph_s, s.offset_s + params.sph_s});
  plan.preictal = detail::subtract(detail::normalise(preictal), seizure_spans);
  plan.interictal = detail::subtract(detail::subtract(whole, near_seizure), plan.preictal);
  auto labelled = plan.preictal;
  labelled.insert(labelled.end(), plan.interictal.begin(), plan.interictal.end());
  plan.excluded = detail::subtract(whole, labelled);
  return plan;
}

// ---------------------------------------------------------------------------
// Windows

struct WindowParams {
  double window_s = 20.0;
  double preictal_stride_s = 15.0;
  double interictal_stride_s = 20.0;
};

struct WindowSample {
  Tensor<float> data;  // [1, channels, window samples]
  Label label = Label::interictal;
  std::uint32_t recording_id = 0;
  double start_s = 0.0;
};

// Number of windows of `window` samples with the given stride that fit in `length` samples.
constexpr std::size_t window_count(std::size_t length, std::size_t window, std::size_t stride) noexcept {
  return length < window || window == 0 || stride == 0 ? 0 : (length - window) / stride + 1;
}

namespace detail {

inline std::size_t to_samples(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

}  // namespace detail

inline std::vector<WindowSample> extract_windows(const EegRecording& rec, const IntervalPlan& plan,
                                                 const WindowParams& params = {}, std::uint32_t recording_id = 0) {
  rec.validate();
  const std::size_t win = detail::to_samples(params.window_s, rec.sample_rate);
  const std::size_t pre_stride = detail::to_samples(params.preictal_stride_s, rec.sample_rate);
  const std::size_t inter_stride = detail::to_samples(params.interictal_stride_s, rec.sample_rate);
  if (win == 0) throw ConfigError("window must span at least one sample");
  if (pre_stride == 0 || inter_stride == 0) throw ConfigError("window strides must be at least one sample");

  const std::size_t n = rec.sample_count();
  std::vector<WindowSample> out;
  auto take = [&](const std::vector<Interval>& intervals, std::size_t stride, Label label) {
    for (const auto& iv : intervals) {
      const auto first = static_cast<std::size_t>(std::ceil(iv.start_s * rec.sample_rate - 1e-9));
      const auto last = std::min(n, static_cast<std::size_t>(std::floor(iv.end_s * rec.sample_rate + 1e-9)));
      if (last <= first) continue;
      const std::size_t count = window_count(last - first, win, stride);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t start = first + k * stride;
        WindowSample ws{Tensor<float>(Shape3{1, rec.channels, win}), label, recording_id,
                        static_cast<double>(start) / rec.sample_rate};
        for (std::size_t ch = 0; ch < rec.channels; ++ch) {
          for (std::size_t i = 0; i < win; ++i) ws.data.at(0, ch, i) = static_cast<float>(rec.at(ch, start + i));
        }
        out.push_back(std::move(ws));
      }
    }
  };
  take(plan.preictal, pre_stride, Label::preictal);
  take(plan.interictal, inter_stride, Label::interictal);
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split

struct SplitResult {
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
};

// Seeded, label-stratified split with |train| = round(train_fraction * n).
// Per-class train sizes use largest-remainder rounding; any class with at
// least two samples keeps at least one sample on each side. When both rules
// cannot hold at once (e.g. 2 + 2 samples), the class rule wins and |train|
// is as close to the target as it allows.
inline SplitResult split_train_test(std::vector<WindowSample> samples, double train_fraction, std::uint64_t seed) {
  if (samples.empty()) return {};
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  const std::size_t n = samples.size();
  const auto total_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<int>(samples[i].label)].push_back(i);
  std::size_t quota[2];
  double remainder[2];
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = train_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    assigned += quota[c];
  }
  while (assigned < total_train) {
    const int c = remainder[0] >= remainder[1] ? 0 : 1;
    const int pick = quota[c] < by_class[c].size() ? c : 1 - c;
    ++quota[pick];
    remainder[pick] = -1.0;
    ++assigned;
  }
  // Clamp each class to [lo, hi] so it keeps a sample on each side, then move
  // the difference to the other class while it has room.
  std::size_t lo[2];
  std::size_t hi[2];
  for (int c = 0; c < 2; ++c) {
    const std::size_t size = by_class[c].size();
    lo[c] = size >= 2 ? 1 : 0;
    hi[c] = size >= 2 ? size - 1 : size;
    quota[c] = std::clamp(quota[c], lo[c], hi[c]);
  }
  for (int c = 0; c < 2 && quota[0] + quota[1] < total_train; ++c) {
    quota[c] += std::min(hi[c] - quota[c], total_train - quota[0] - quota[1]);
  }
  for (int c = 0; c < 2 && quota[0] + quota[1] > total_train; ++c) {
    quota[c] -= std::min(quota[c] - lo[c], quota[0] + quota[1] - total_train);
  }

  SplitResult result;
  for (int c = 0; c < 2; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(std::span(by_class[c]));
    for (std::size_t k = 0; k < by_class[c].size(); ++k) {
      (k < quota[c] ? result.train : result.test).push_back(std::move(samples[by_class[c][k]]));
    }
  }
  Rng mix(derive_seed(seed, 2));
  mix.shuffle(std::span(result.train));
  mix.shuffle(std::span(result.test));
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic recordings

struct SynthConfig {
  double duration_s = 6.0 * 3600.0;
  std::size_t channels = 4;
  double sample_rate = 16.0;
  std::vector<double> seizure_onsets_s{5.0 * 3600.0};
  double seizure_duration_s = 60.0;
  IntervalParams intervals{};
  // Background: low-passed Gaussian noise with this standard deviation (uV).
  double noise_std = 20.0;
  double noise_smoothing = 0.3;  // one-pole coefficient in [0, 1)
  // Preictal bursts: sinusoids of burst_len_s, one per burst_period_s.
  double burst_amplitude = 60.0;
  double burst_freq_hz = 3.0;
  double burst_len_s = 2.0;
  double burst_period_s = 5.0;
  double ictal_amplitude = 120.0;
  double ictal_freq_hz = 5.0;
};

struct SynthResult {
  EegRecording recording;
  SeizureAnnotations seizures;
  IntervalPlan plan;
};

inline SynthResult synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.channels == 0 || !(cfg.sample_rate > 0.0) || !(cfg.duration_s > 0.0)) {
    throw ConfigError("synth: channels, sample_rate and duration_s must be positive");
  }
  if (!(cfg.noise_smoothing >= 0.0 && cfg.noise_smoothing < 1.0)) throw ConfigError("synth: noise_smoothing must be in [0, 1)");
  if (!(cfg.burst_period_s >= cfg.burst_len_s && cfg.burst_len_s > 0.0)) {
    throw ConfigError("synth: need 0 < burst_len_s <= burst_period_s");
  }
  SynthResult out;
  for (double onset : cfg.seizure_onsets_s) {
    if (onset < 0.0 || onset + cfg.seizure_duration_s > cfg.duration_s) {
      throw InputError("synth: seizure at " + format_double(onset) + " s does not fit in the " +
                       format_double(cfg.duration_s) + " s recording");
    }
    out.seizures.push_back({onset, onset + cfg.seizure_duration_s});
  }
  std::sort(out.seizures.begin(), out.seizures.end(), [](const Seizure& a, const Seizure& b) { return a.onset_s < b.onset_s; });
  out.plan = label_intervals(out.seizures, cfg.duration_s, cfg.intervals);

  auto& rec = out.recording;
  rec.channels = cfg.channels;
  rec.sample_rate = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  rec.samples.assign(cfg.channels * n, 0.0);
  for (std::size_t ch = 0; ch < cfg.channels; ++ch) rec.channel_labels.push_back("SYN" + std::to_string(ch + 1));

  const double a = cfg.noise_smoothing;
  const double gain = cfg.noise_std * std::sqrt((1.0 + a) / (1.0 - a));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
    double* row = rec.samples.data() + ch * n;
    Rng noise(derive_seed(seed, ch));
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y = a * y + (1.0 - a) * gain * noise.normal();
      row[i] = y;
    }

    Rng bursts(derive_seed(seed, 0x10000 + ch));
    for (const auto& iv : out.plan.preictal) {
      for (double slot = iv.start_s; slot + cfg.burst_period_s <= iv.end_s + 1e-9; slot += cfg.burst_period_s) {
        const double start = slot + bursts.uniform() * (cfg.burst_period_s - cfg.burst_len_s);
        const double phase = bursts.uniform() * two_pi;
        const auto first = static_cast<std::size_t>(std::ceil(start * cfg.sample_rate));
        const auto last = std::min(n, static_cast<std::size_t>(std::ceil((start + cfg.burst_len_s) * cfg.sample_rate)));
        for (std::size_t i = first; i < last; ++i) {
          const double t = static_cast<double>(i) / cfg.sample_rate;
          row[i] += cfg.burst_amplitude * std::sin(two_pi * cfg.burst_freq_hz * (t - start) + phase);
        }
      }
    }
    for (const auto& s : out.seizures) {
      const auto first = static_cast<std::size_t>(std::ceil(s.onset_s * cfg.sample_rate));
      const auto last = std::min(n, static_cast<std::size_t>(std::ceil(s.offset_s * cfg.sample_rate)));
      for (std::size_t i = first; i < last; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        row[i] += cfg.ictal_amplitude * std::sin(two_pi * cfg.ictal_freq_hz * t);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation CSV: header "onset_s,offset_s", one seizure per line.

inline SeizureAnnotations parse_annotations_csv(std::string_view text, const std::string& source = "annotations") {
  SeizureAnnotations out;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "onset_s,offset_s") {
        throw InputError(source + ":" + std::to_string(line_no) + ": expected header \"onset_s,offset_s\"");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split(line, ',');
    std::optional<double> onset;
    std::optional<double> offset;
    if (fields.size() == 2) {
      onset = parse_double(fields[0]);
      offset = parse_double(fields[1]);
    }
    if (!onset || !offset || !std::isfinite(*onset) || !std::isfinite(*offset)) {
      throw InputError(source + ":" + std::to_string(line_no) + ": cannot parse \"" + std::string(line) + "\"");
    }
    if (!(*onset < *offset)) {
      throw InputError(source + ":" + std::to_string(line_no) + ": onset " + format_double(*onset) +
                       " is not before offset " + format_double(*offset));
    }
    out.push_back({*onset, *offset});
  }
  if (!header_seen) throw InputError(source + ": missing header \"onset_s,offset_s\"");
  std::sort(out.begin(), out.end(), [](const Seizure& a, const Seizure& b) { return a.onset_s < b.onset_s; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].onset_s < out[i - 1].offset_s) {
      throw InputError(source + ": seizures [" + format_double(out[i - 1].onset_s) + ", " +
                       format_double(out[i - 1].offset_s) + "] and [" + format_double(out[i].onset_s) + ", " +
                       format_double(out[i].offset_s) + "] overlap");
    }
  }
  return out;
}

inline SeizureAnnotations read_annotations_csv(const std::filesystem::path& path) {
  return parse_annotations_csv(read_file_text(path), path.string());
}

inline std::string annotations_csv(const SeizureAnnotations& seizures) {
  std::string out = "onset_s,offset_s\n";
  for (const auto& s : seizures) out += format_double(s.onset_s) + "," + format_double(s.offset_s) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Window batch file:
//   "WSMP" | u32 version = 1 | u32 N | u32 C | u32 H | u32 W
//   per sample: u8 label (1 = preictal) | f64 start_s | C*H*W f32 payload

inline constexpr std::uint32_t kWindowBatchVersion = 1;

inline std::vector<std::uint8_t> serialize_windows(const std::vector<WindowSample>& samples) {
  ByteWriter out;
  out.raw("WSMP");
  out.u32(kWindowBatchVersion);
  out.u32(static_cast<std::uint32_t>(samples.size()));
  const Shape3 shape = samples.empty() ? Shape3{0, 0, 0} : samples.front().data.shape3();
  out.u32(static_cast<std::uint32_t>(shape.c));
  out.u32(static_cast<std::uint32_t>(shape.h));
  out.u32(static_cast<std::uint32_t>(shape.w));
  for (const auto& s : samples) {
    if (s.data.shape3() != shape) throw StructuralError("window batch samples differ in shape");
    out.u8(static_cast<std::uint8_t>(s.label));
    out.f64(s.start_s);
    for (float v : s.data.values()) out.f32(v);
  }
  return out.take();
}

inline std::vector<WindowSample> deserialize_windows(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "window batch");
  in.expect_magic("WSMP");
  const auto version = in.u32();
  if (version != kWindowBatchVersion) throw UnsupportedError("window batch version " + std::to_string(version) + " is not supported");
  const auto count = in.u32();
  const Shape3 shape{in.u32(), in.u32(), in.u32()};
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t at = in.offset();
    const auto label = in.u8();
    if (label > 1) throw FormatError("window batch: label byte must be 0 or 1", at);
    WindowSample s{Tensor<float>(shape), static_cast<Label>(label), 0, in.f64()};
    in.require(shape.size() * 4);
    for (auto& v : s.data.values()) v = in.f32();
    out.push_back(std::move(s));
  }
  if (!in.at_end()) throw FormatError("window batch: trailing bytes", in.offset());
  return out;
}

inline void save_windows(const std::vector<WindowSample>& samples, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_windows(samples));
}

inline std::vector<WindowSample> load_windows(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("window file not found: " + path.string());
  return deserialize_windows(read_file_bytes(path));
}

}  // namespace spikecnn
