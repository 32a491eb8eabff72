#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "spikecnn/eeg.hpp"
#include "spikecnn/evaluation.hpp"

namespace spikecnn {
namespace {

EegRecording flat_recording(std::size_t channels, double rate, double duration_s) {
  EegRecording rec;
  rec.channels = channels;
  rec.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(rate * duration_s));
  rec.samples.resize(channels * n);
  for (std::size_t i = 0; i < rec.samples.size(); ++i) rec.samples[i] = static_cast<double>(i % 97);
  return rec;
}

double total_length(const std::vector<Interval>& v) {
  double s = 0.0;
  for (const auto& iv : v) s += iv.length();
  return s;
}

bool overlaps(const Interval& a, const Interval& b) { return a.start_s < b.end_s && b.start_s < a.end_s; }

TEST(LabelIntervals, SingleSeizurePreictal) {
  const auto plan = label_intervals({{7000.0, 7060.0}}, 7200.0);
  ASSERT_EQ(plan.preictal.size(), 1u);
  EXPECT_EQ(plan.preictal[0], (Interval{4900.0, 6700.0}));
  EXPECT_TRUE(plan.interictal.empty());  // nothing is 4 h from the seizure
}

TEST(LabelIntervals, NoSeizuresIsAllInterictal) {
  const auto plan = label_intervals({}, 3600.0);
  EXPECT_TRUE(plan.preictal.empty());
  ASSERT_EQ(plan.interictal.size(), 1u);
  EXPECT_EQ(plan.interictal[0], (Interval{0.0, 3600.0}));
}

TEST(LabelIntervals, NonLeadSeizureGetsNoPreictal) {
  const auto plan = label_intervals({{20000.0, 20060.0}, {23660.0, 23700.0}}, 40000.0);
  EXPECT_EQ(plan.lead_seizures, (std::vector<std::size_t>{0}));
  ASSERT_EQ(plan.preictal.size(), 1u);
  EXPECT_EQ(plan.preictal[0], (Interval{17900.0, 19700.0}));
}

TEST(LabelIntervals, RejectsBadAnnotations) {
  EXPECT_THROW(label_intervals({{100.0, 50.0}}, 1000.0), InputError);
  EXPECT_THROW(label_intervals({{900.0, 1100.0}}, 1000.0), InputError);
  EXPECT_THROW(label_intervals({{100.0, 300.0}, {200.0, 400.0}}, 1000.0), InputError);
}

TEST(LabelIntervals, PartsAreDisjointAndCoverRecording) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double duration = 3600.0 * (4.0 + rng.uniform() * 40.0);
    SeizureAnnotations seizures;
    double t = rng.uniform() * 20000.0;
    while (t + 200.0 < duration && seizures.size() < 6) {
      const double len = 10.0 + rng.uniform() * 150.0;
      seizures.push_back({t, t + len});
      t += len + 60.0 + rng.uniform() * 30000.0;
    }
    const auto plan = label_intervals(seizures, duration);
    const double covered = total_length(plan.preictal) + total_length(plan.interictal) + total_length(plan.excluded);
    EXPECT_NEAR(covered, duration, 1e-6);
    for (const auto& p : plan.preictal) {
      for (const auto& i : plan.interictal) EXPECT_FALSE(overlaps(p, i));
      for (const auto& e : plan.excluded) EXPECT_FALSE(overlaps(p, e));
      for (const auto& s : seizures) EXPECT_FALSE(overlaps(p, Interval{s.onset_s, s.offset_s + plan.params.sph_s}));
    }
    for (const auto& i : plan.interictal) {
      for (const auto& e : plan.excluded) EXPECT_FALSE(overlaps(i, e));
      for (const auto& s : seizures) {
        EXPECT_FALSE(overlaps(i, Interval{s.onset_s - plan.params.lead_gap_s, s.offset_s + plan.params.lead_gap_s}));
      }
    }
  }
}

TEST(Windows, ClosedFormCounts) {
  const auto rec = flat_recording(1, 1.0, 7200.0);
  IntervalPlan plan;
  plan.preictal = {{0.0, 1800.0}};
  plan.interictal = {{3600.0, 7200.0}};
  const auto windows = extract_windows(rec, plan);
  const auto pre = std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.label == Label::preictal; });
  EXPECT_EQ(pre, 119);
  EXPECT_EQ(static_cast<long>(windows.size()) - pre, 180);
}

TEST(Windows, ShortIntervalYieldsNothing) {
  const auto rec = flat_recording(1, 4.0, 100.0);
  IntervalPlan plan;
  plan.interictal = {{10.0, 20.0}};
  EXPECT_TRUE(extract_windows(rec, plan).empty());
}

TEST(Windows, FullRateShape) {
  const auto rec = flat_recording(23, 256.0, 60.0);
  IntervalPlan plan;
  plan.interictal = {{0.0, 40.0}};
  const auto windows = extract_windows(rec, plan);
  ASSERT_EQ(windows.size(), 2u);
  EXPECT_EQ(windows[0].data.shape3(), (Shape3{1, 23, 5120}));
  EXPECT_EQ(windows[1].start_s, 20.0);
  EXPECT_EQ(windows[1].data.at(0, 3, 7), static_cast<float>(rec.at(3, 20 * 256 + 7)));
}

TEST(Windows, CountsMatchFormulaForRandomLengths) {
  Rng rng(8);
  const auto rec = flat_recording(1, 2.0, 5000.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double start = static_cast<double>(rng.below(1000));
    const double length = static_cast<double>(rng.below(3000));
    const double stride = static_cast<double>(1 + rng.below(25));
    IntervalPlan plan;
    plan.preictal = {{start, start + length}};
    const auto windows = extract_windows(rec, plan, WindowParams{20.0, stride, 20.0});
    const std::size_t expected = length < 20.0 ? 0 : static_cast<std::size_t>(std::floor((length - 20.0) / stride)) + 1;
    EXPECT_EQ(windows.size(), expected) << "length " << length << " stride " << stride;
    for (const auto& w : windows) {
      EXPECT_GE(w.start_s, start);
      EXPECT_LE(w.start_s + 20.0, start + length + 1e-9);
    }
  }
}

TEST(Windows, OverlapYieldsMorePreictalForEqualTime) {
  Rng rng(9);
  const auto rec = flat_recording(1, 1.0, 20000.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double len = 40.0 + static_cast<double>(rng.below(5000));
    IntervalPlan plan;
    plan.preictal = {{0.0, len}};
    plan.interictal = {{10000.0, 10000.0 + len}};
    const auto windows = extract_windows(rec, plan);
    const auto pre = std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.label == Label::preictal; });
    EXPECT_GT(pre, static_cast<long>(windows.size()) - pre);
  }
}

std::vector<WindowSample> labelled(std::size_t pre, std::size_t inter) {
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < pre + inter; ++i) {
    out.push_back({Tensor<float>(Shape3{1, 1, 1}, static_cast<float>(i)), i < pre ? Label::preictal : Label::interictal, 0,
                   static_cast<double>(i)});
  }
  return out;
}

std::vector<double> starts(const std::vector<WindowSample>& v) {
  std::vector<double> s;
  for (const auto& w : v) s.push_back(w.start_s);
  return s;
}

TEST(Split, SizesAndStratification) {
  const auto a = split_train_test(labelled(3, 7), 0.8, 1);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.test.size(), 2u);
  const auto b = split_train_test(labelled(5, 5), 0.8, 1);
  for (const auto* part : {&b.train, &b.test}) {
    const auto pre = std::count_if(part->begin(), part->end(), [](const auto& w) { return w.label == Label::preictal; });
    EXPECT_EQ(pre, part == &b.train ? 4 : 1);
  }
  EXPECT_TRUE(split_train_test({}, 0.8, 1).train.empty());
  EXPECT_THROW(split_train_test(labelled(2, 2), 1.0, 1), ConfigError);
}

TEST(Split, PropertiesOverRandomSizes) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = rng.below(40), i = rng.below(40);
    if (p + i == 0) continue;
    const auto s = split_train_test(labelled(p, i), 0.8, trial);
    // a class of two or more keeps a sample on each side; the total follows
    // round(0.8 n) within the range that allows
    auto lo = [](std::size_t n) { return n >= 2 ? std::size_t{1} : std::size_t{0}; };
    auto hi = [](std::size_t n) { return n >= 2 ? n - 1 : n; };
    const auto target = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(p + i)));
    EXPECT_EQ(s.train.size(), std::clamp(target, lo(p) + lo(i), hi(p) + hi(i)));
    auto all = starts(s.train);
    const auto t = starts(s.test);
    all.insert(all.end(), t.begin(), t.end());
    std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < all.size(); ++k) ASSERT_EQ(all[k], static_cast<double>(k));
    for (auto [count, label] : {std::pair{p, Label::preictal}, std::pair{i, Label::interictal}}) {
      if (count < 2) continue;
      auto has = [&](const std::vector<WindowSample>& v) {
        return std::any_of(v.begin(), v.end(), [&](const auto& w) { return w.label == label; });
      };
      EXPECT_TRUE(has(s.train));
      EXPECT_TRUE(has(s.test));
    }
  }
}

TEST(Split, SeedDeterminism) {
  EXPECT_EQ(starts(split_train_test(labelled(20, 30), 0.8, 4).test), starts(split_train_test(labelled(20, 30), 0.8, 4).test));
  EXPECT_NE(starts(split_train_test(labelled(20, 30), 0.8, 4).test), starts(split_train_test(labelled(20, 30), 0.8, 5).test));
}

TEST(Synth, DeterministicGivenSeed) {
  SynthConfig cfg;
  cfg.duration_s = 5.0 * 3600.0;
  cfg.seizure_onsets_s = {4.5 * 3600.0};
  const auto a = synth_generate(cfg, 3);
  const auto b = synth_generate(cfg, 3);
  EXPECT_EQ(a.recording.samples, b.recording.samples);
  EXPECT_EQ(a.seizures, b.seizures);
  EXPECT_NE(a.recording.samples, synth_generate(cfg, 4).recording.samples);
  cfg.seizure_onsets_s = {5.0 * 3600.0};
  EXPECT_THROW(synth_generate(cfg, 3), InputError);
}

TEST(Synth, DefaultRecordingWindowCounts) {
  const auto s = synth_generate(SynthConfig{}, 1);
  const auto windows = extract_windows(s.recording, s.plan);
  const auto pre = std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.label == Label::preictal; });
  EXPECT_EQ(pre, 119);
  EXPECT_EQ(static_cast<long>(windows.size()) - pre, 180);
}

// Per-window signal power as a score: near chance with no bursts, near
// perfect with the default bursts.
double power_auc(double amplitude, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.burst_amplitude = amplitude;
  const auto s = synth_generate(cfg, seed);
  const auto windows = extract_windows(s.recording, s.plan);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& w : windows) {
    double e = 0.0;
    for (float v : w.data.values()) e += static_cast<double>(v) * v;
    scores.push_back(e);
    labels.push_back(w.label);
  }
  return auc(roc(scores, labels));
}

TEST(Synth, ClassSeparabilityFollowsBurstAmplitude) {
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) mean += power_auc(0.0, seed) / 5.0;
  EXPECT_NEAR(mean, 0.5, 0.05);
  EXPECT_GT(power_auc(SynthConfig{}.burst_amplitude, 1), 0.95);
}

TEST(AnnotationsCsv, Examples) {
  EXPECT_EQ(parse_annotations_csv("onset_s,offset_s\n7000,7060\n"), (SeizureAnnotations{{7000.0, 7060.0}}));
  EXPECT_TRUE(parse_annotations_csv("onset_s,offset_s\n").empty());
  EXPECT_THROW(parse_annotations_csv("onset_s,offset_s\n10,5\n"), InputError);
  EXPECT_THROW(parse_annotations_csv("onset,offset\n1,2\n"), InputError);
  EXPECT_THROW(parse_annotations_csv("onset_s,offset_s\n1,5\n3,8\n"), InputError);
  try {
    parse_annotations_csv("onset_s,offset_s\n1,2\nabc,3\n", "ann.csv");
    FAIL() << "expected a parse error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("ann.csv:3"), std::string::npos);
  }
}

TEST(AnnotationsCsv, SortsAndRoundTrips) {
  const SeizureAnnotations unsorted = parse_annotations_csv("onset_s,offset_s\n500,510.5\n100,120\n");
  EXPECT_EQ(unsorted, (SeizureAnnotations{{100.0, 120.0}, {500.0, 510.5}}));
  EXPECT_EQ(parse_annotations_csv(annotations_csv(unsorted)), unsorted);
}

}  // namespace
}  // namespace spikecnn
