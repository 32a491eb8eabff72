#pragma once

// Minimal EDF (European Data Format) support: continuous recordings whose
// signals all share one sampling rate. EDF+ discontinuous files, annotation
// channels and mixed rates are rejected.
//
// Layout: 256-byte ASCII header, 256 bytes of per-signal header fields for
// each of ns signals, then data records. Each record holds, per signal,
// samples_per_record little-endian int16 values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spikecnn/binary_io.hpp"
#include "spikecnn/eeg.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/text.hpp"

namespace spikecnn {

namespace edf_detail {

inline constexpr int kDigitalMin = -32768;
inline constexpr int kDigitalMax = 32767;

inline std::string field(std::string_view text, std::size_t width) {
  std::string out(text.substr(0, width));
  out.resize(width, ' ');
  return out;
}

// Shortest decimal form of v that fits in 8 characters, rounded towards
// -inf (down = true) or +inf so the written range still covers v.
inline std::string fit8(double v, bool down) {
  for (int digits = 6; digits >= 0; --digits) {
    const double scale = std::pow(10.0, digits);
    const double r = down ? std::floor(v * scale) / scale : std::ceil(v * scale) / scale;
    std::string s = format_fixed(r, digits);
    if (digits > 0) {
      while (s.back() == '0') s.pop_back();
      if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    if (s.size() <= 8) return s;
  }
  throw InputError("EDF: physical value " + format_double(v) + " does not fit in an 8-character field");
}

struct FieldReader {
  ByteReader& in;

  std::string text(std::size_t width) { return std::string(trim(in.raw(width))); }

  double number(std::size_t width, const char* name) {
    const std::size_t at = in.offset();
    const auto s = text(width);
    const auto v = parse_double(s);
    if (!v) throw FormatError(std::string("EDF: field ") + name + " is not a number: \"" + s + "\"", at);
    return *v;
  }
};

}  // namespace edf_detail

inline std::vector<std::uint8_t> serialize_edf(const EegRecording& rec) {
  using namespace edf_detail;
  rec.validate();
  const std::size_t n = rec.sample_count();
  const auto rate_int = static_cast<std::size_t>(std::llround(rec.sample_rate));
  std::size_t per_record = rate_int;
  double record_s = 1.0;
  if (std::abs(rec.sample_rate - static_cast<double>(rate_int)) > 1e-9 || rate_int == 0 || n % rate_int != 0) {
    per_record = n;
    record_s = rec.duration_s();
  }
  const std::size_t records = per_record == 0 ? 0 : n / per_record;
  const std::size_t ns = rec.channels;

  ByteWriter out;
  out.raw(field("0", 8));
  out.raw(field("X X X X", 80));
  out.raw(field("Startdate X X X X", 80));
  out.raw(field("01.01.00", 8));
  out.raw(field("00.00.00", 8));
  out.raw(field(std::to_string(256 * (ns + 1)), 8));
  out.raw(field("", 44));
  out.raw(field(std::to_string(records), 8));
  out.raw(field(fit8(record_s, false), 8));
  out.raw(field(std::to_string(ns), 4));

  std::vector<double> pmin(ns);
  std::vector<double> pmax(ns);
  std::vector<std::string> pmin_s(ns);
  std::vector<std::string> pmax_s(ns);
  for (std::size_t ch = 0; ch < ns; ++ch) {
    const auto row = std::span(rec.samples).subspan(ch * n, n);
    double lo = n > 0 ? *std::min_element(row.begin(), row.end()) : -1.0;
    double hi = n > 0 ? *std::max_element(row.begin(), row.end()) : 1.0;
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    pmin_s[ch] = fit8(lo, true);
    pmax_s[ch] = fit8(hi, false);
    pmin[ch] = *parse_double(pmin_s[ch]);
    pmax[ch] = *parse_double(pmax_s[ch]);
  }
  auto each = [&](auto&& fn, std::size_t width) {
    for (std::size_t ch = 0; ch < ns; ++ch) out.raw(field(fn(ch), width));
  };
  each([&](std::size_t ch) { return ch < rec.channel_labels.size() ? rec.channel_labels[ch] : "CH" + std::to_string(ch + 1); }, 16);
  each([](std::size_t) { return std::string(); }, 80);
  each([](std::size_t) { return std::string("uV"); }, 8);
  each([&](std::size_t ch) { return pmin_s[ch]; }, 8);
  each([&](std::size_t ch) { return pmax_s[ch]; }, 8);
  each([](std::size_t) { return std::to_string(kDigitalMin); }, 8);
  each([](std::size_t) { return std::to_string(kDigitalMax); }, 8);
  each([](std::size_t) { return std::string(); }, 80);
  each([&](std::size_t) { return std::to_string(per_record); }, 8);
  each([](std::size_t) { return std::string(); }, 32);

  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t ch = 0; ch < ns; ++ch) {
      const double span = pmax[ch] - pmin[ch];
      for (std::size_t i = 0; i < per_record; ++i) {
        const double phys = rec.at(ch, r * per_record + i);
        const double dig = (phys - pmin[ch]) * (kDigitalMax - kDigitalMin) / span + kDigitalMin;
        const auto d = static_cast<std::int64_t>(std::llround(dig));
        out.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp<std::int64_t>(d, kDigitalMin, kDigitalMax))));
      }
    }
  }
  return out.take();
}

inline EegRecording deserialize_edf(std::span<const std::uint8_t> bytes) {
  using namespace edf_detail;
  ByteReader in(bytes, "EDF");
  FieldReader f{in};
  const std::size_t version_at = in.offset();
  if (f.text(8) != "0") throw FormatError("EDF: version field must be \"0\"", version_at);
  f.text(80);
  f.text(80);
  f.text(8);
  f.text(8);
  const auto header_bytes = static_cast<std::size_t>(f.number(8, "header bytes"));
  const std::string reserved = f.text(44);
  if (reserved.starts_with("EDF+D")) throw UnsupportedError("EDF+D (discontinuous) files are not supported");
  const std::size_t records_at = in.offset();
  const double records_d = f.number(8, "number of data records");
  if (records_d < 0) throw UnsupportedError("EDF: unknown record count (-1) is not supported");
  const auto records = static_cast<std::size_t>(records_d);
  const double record_s = f.number(8, "record duration");
  const auto ns = static_cast<std::size_t>(f.number(4, "number of signals"));
  if (ns == 0) throw FormatError("EDF: file declares zero signals", records_at);
  if (header_bytes != 256 * (ns + 1)) {
    throw FormatError("EDF: header size " + std::to_string(header_bytes) + " does not match " + std::to_string(ns) +
                          " signals",
                      184);
  }
  if (!(record_s > 0.0)) throw FormatError("EDF: record duration must be positive", records_at + 8);

  std::vector<std::string> labels(ns);
  std::vector<double> pmin(ns), pmax(ns), dmin(ns), dmax(ns), spr(ns);
  for (auto& l : labels) l = f.text(16);
  for (std::size_t i = 0; i < ns; ++i) f.text(80);
  for (std::size_t i = 0; i < ns; ++i) f.text(8);
  for (auto& v : pmin) v = f.number(8, "physical minimum");
  for (auto& v : pmax) v = f.number(8, "physical maximum");
  for (auto& v : dmin) v = f.number(8, "digital minimum");
  for (auto& v : dmax) v = f.number(8, "digital maximum");
  for (std::size_t i = 0; i < ns; ++i) f.text(80);
  for (auto& v : spr) v = f.number(8, "samples per record");
  for (std::size_t i = 0; i < ns; ++i) f.text(32);

  for (std::size_t i = 0; i < ns; ++i) {
    if (labels[i] == "EDF Annotations") throw UnsupportedError("EDF+ annotation signals are not supported");
    if (spr[i] != spr[0]) {
      throw UnsupportedError("EDF: mixed sampling rates (signal 0 has " + format_double(spr[0]) +
                             " samples per record, signal " + std::to_string(i) + " has " + format_double(spr[i]) + ")");
    }
    if (!(dmax[i] > dmin[i])) throw FormatError("EDF: digital maximum must exceed digital minimum", 256);
  }
  const auto per_record = static_cast<std::size_t>(spr[0]);
  const std::size_t expected = records * ns * per_record * 2;
  if (in.remaining() < expected) {
    throw FormatError("EDF: truncated data, expected " + std::to_string(expected) + " bytes of data records but found " +
                          std::to_string(in.remaining()),
                      in.offset());
  }

  EegRecording rec;
  rec.channels = ns;
  rec.sample_rate = static_cast<double>(per_record) / record_s;
  rec.channel_labels = labels;
  const std::size_t n = records * per_record;
  rec.samples.assign(ns * n, 0.0);
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t ch = 0; ch < ns; ++ch) {
      const double gain = (pmax[ch] - pmin[ch]) / (dmax[ch] - dmin[ch]);
      for (std::size_t i = 0; i < per_record; ++i) {
        const auto digital = static_cast<std::int16_t>(in.u16());
        rec.samples[ch * n + r * per_record + i] = (digital - dmin[ch]) * gain + pmin[ch];
      }
    }
  }
  return rec;
}

inline void write_edf(const EegRecording& rec, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_edf(rec));
}

inline EegRecording read_edf(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("EDF file not found: " + path.string());
  return deserialize_edf(read_file_bytes(path));
}

}  // namespace spikecnn
