#pragma once

// Classification metrics for the preictal (positive) / interictal task.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spikecnn/errors.hpp"
#include "spikecnn/label.hpp"
#include "spikecnn/snn.hpp"
#include "spikecnn/text.hpp"

namespace spikecnn {

// A ratio that may be undefined (zero denominator). Undefined values carry NaN
// and a reason instead of silently reading as zero.
struct Ratio {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string undefined_reason;

  [[nodiscard]] bool defined() const noexcept { return undefined_reason.empty(); }

  static Ratio of(std::uint64_t num, std::uint64_t den, const char* reason) {
    if (den == 0) return Ratio{std::numeric_limits<double>::quiet_NaN(), reason};
    return Ratio{static_cast<double>(num) / static_cast<double>(den), {}};
  }
};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;

  [[nodiscard]] std::uint64_t positives() const noexcept { return tp + fn; }
  [[nodiscard]] std::uint64_t negatives() const noexcept { return tn + fp; }
  [[nodiscard]] std::uint64_t total() const noexcept { return tp + fn + tn + fp; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pos = labels[i] == Label::preictal;
    const bool said_pos = predictions[i] == Label::preictal;
    if (pos) {
      (said_pos ? c.tp : c.fn) += 1;
    } else {
      (said_pos ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

struct Metrics {
  Ratio acc;
  Ratio sen;
  Ratio fpr;
};

inline Metrics metrics(const ConfusionCounts& c) {
  return {Ratio::of(c.tp + c.tn, c.total(), "no samples"), Ratio::of(c.tp, c.positives(), "no preictal samples"),
          Ratio::of(c.fp, c.negatives(), "no interictal samples")};
}

// False alarms per hour of monitored time.
inline double fpr_per_hour(std::uint64_t false_alarms, double monitored_duration_s) {
  if (!(monitored_duration_s > 0.0)) throw ConfigError("fpr_per_hour requires a positive monitored duration");
  return static_cast<double>(false_alarms) * 3600.0 / monitored_duration_s;
}

// ---------------------------------------------------------------------------
// ROC / AUC

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

// Threshold sweep from the highest score down. All samples sharing a score
// enter together, so ties form one (possibly diagonal) step.
inline RocCurve roc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw InputError("roc: scores and labels differ in length");
  const auto pos = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), Label::preictal));
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InputError("roc: both classes must be present");
  for (double s : scores) {
    if (std::isnan(s)) throw InputError("roc: score is NaN");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == Label::preictal ? tp : fp) += 1;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return curve;
}

// Trapezoidal area under the curve.
inline double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

// ---------------------------------------------------------------------------
// Count-threshold sweep

struct SweepRow {
  std::int64_t threshold = 0;
  ConfusionCounts confusion;
  Metrics metrics;
};

inline std::vector<SweepRow> threshold_sweep(std::span<const SpikeCounts> counts, std::span<const Label> labels,
                                             std::span<const std::int64_t> thresholds,
                                             TieBreak tie = TieBreak::interictal) {
  if (counts.size() != labels.size()) throw InputError("threshold_sweep: counts and labels differ in length");
  std::vector<SweepRow> rows;
  std::vector<Label> predictions(counts.size());
  for (std::int64_t t : thresholds) {
    for (std::size_t i = 0; i < counts.size(); ++i) predictions[i] = decide(counts[i], t, tie);
    const auto c = confusion(predictions, labels);
    rows.push_back({t, c, metrics(c)});
  }
  return rows;
}

inline std::vector<std::int64_t> default_count_thresholds() { return {0, 1, 2, 3, 4}; }

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_ratio(const Ratio& r) { return r.defined() ? format_fixed(r.value, 6) : "nan"; }

inline std::string metrics_csv(std::span<const SweepRow> rows) {
  std::string out = "threshold,acc,sen,fpr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.threshold) + "," + format_ratio(r.metrics.acc) + "," + format_ratio(r.metrics.sen) + "," +
           format_ratio(r.metrics.fpr) + "\n";
  }
  return out;
}

inline std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve.points) out += format_fixed(p.fpr, 6) + "," + format_fixed(p.tpr, 6) + "\n";
  return out;
}

// Per-sample inference result; one row of the predictions CSV
// (sample_id,label,count_p,count_i,score,prediction).
struct PredictionRow {
  std::size_t sample_id = 0;
  Label label = Label::interictal;
  std::uint32_t count_p = 0;
  std::uint32_t count_i = 0;
  double score = 0.0;
  Label prediction = Label::interictal;

  [[nodiscard]] SpikeCounts counts(std::uint32_t time_steps) const { return {{count_p, count_i}, time_steps}; }
};

inline constexpr std::string_view kPredictionsHeader = "sample_id,label,count_p,count_i,score,prediction";

inline std::string predictions_csv(std::span<const PredictionRow> rows) {
  std::string out(kPredictionsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.sample_id) + "," + std::string(to_string(r.label)) + "," + std::to_string(r.count_p) + "," +
           std::to_string(r.count_i) + "," + format_fixed(r.score, 6) + "," + std::string(to_string(r.prediction)) + "\n";
  }
  return out;
}

inline std::vector<PredictionRow> parse_predictions_csv(std::string_view text, const std::string& source = "predictions") {
  std::vector<PredictionRow> rows;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kPredictionsHeader) throw InputError(source + ":" + std::to_string(line_no) + ": unexpected header");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    auto fail = [&]() { return InputError(source + ":" + std::to_string(line_no) + ": cannot parse \"" + std::string(line) + "\""); };
    if (f.size() != 6) throw fail();
    const auto id = parse_double(f[0]);
    const auto label = parse_label(f[1]);
    const auto cp = parse_double(f[2]);
    const auto ci = parse_double(f[3]);
    const auto sc = parse_double(f[4]);
    const auto pred = parse_label(f[5]);
    if (!id || !label || !cp || !ci || !sc || !pred || *cp < 0 || *ci < 0) throw fail();
    rows.push_back({static_cast<std::size_t>(*id), *label, static_cast<std::uint32_t>(*cp), static_cast<std::uint32_t>(*ci),
                    *sc, *pred});
  }
  if (!header_seen) throw InputError(source + ": missing header");
  return rows;
}

}  // namespace spikecnn
