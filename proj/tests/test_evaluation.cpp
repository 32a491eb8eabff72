#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spikecnn/evaluation.hpp"
#include "spikecnn/random.hpp"

namespace spikecnn {
namespace {

constexpr Label P = Label::preictal;
constexpr Label I = Label::interictal;

// Fraction of (positive, negative) pairs ordered correctly, ties counted half.
double mann_whitney(const std::vector<double>& scores, const std::vector<Label>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (labels[a] != P) continue;
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (labels[b] != I) continue;
      pairs += 1.0;
      wins += scores[a] > scores[b] ? 1.0 : (scores[a] == scores[b] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double auc_of(const std::vector<double>& s, const std::vector<Label>& l) { return auc(roc(s, l)); }

TEST(Confusion, Examples) {
  const std::vector<Label> labels{P, P, P, I, I, I};
  EXPECT_EQ(confusion(labels, labels), (ConfusionCounts{3, 0, 3, 0}));
  const std::vector<Label> all_p(6, P);
  EXPECT_EQ(confusion(all_p, labels), (ConfusionCounts{3, 0, 0, 3}));
  EXPECT_EQ(confusion(std::span<const Label>{}, std::span<const Label>{}), ConfusionCounts{});
  EXPECT_THROW(confusion(all_p, std::span<const Label>(labels).first(3)), InputError);
}

TEST(Metrics, Definitions) {
  const auto m = metrics(ConfusionCounts{9, 1, 18, 2});
  EXPECT_DOUBLE_EQ(m.sen.value, 0.9);
  EXPECT_DOUBLE_EQ(m.fpr.value, 0.1);
  EXPECT_DOUBLE_EQ(m.acc.value, 0.9);
  EXPECT_EQ(metrics(ConfusionCounts{0, 4, 0, 4}).acc.value, 0.0);
}

TEST(Metrics, UndefinedRatiosCarryReason) {
  const auto m = metrics(ConfusionCounts{0, 0, 5, 1});
  EXPECT_FALSE(m.sen.defined());
  EXPECT_TRUE(std::isnan(m.sen.value));
  EXPECT_FALSE(m.sen.undefined_reason.empty());
  EXPECT_TRUE(m.fpr.defined());
  EXPECT_EQ(format_ratio(m.sen), "nan");
}

TEST(Metrics, TableFormatFixture) {
  // 951 of 1000 preictal found, 827 of 10000 interictal flagged
  const auto m = metrics(ConfusionCounts{951, 49, 9173, 827});
  EXPECT_NEAR(m.sen.value, 0.951, 1e-12);
  EXPECT_NEAR(m.fpr.value, 0.0827, 1e-12);
}

TEST(FprPerHour, Examples) {
  EXPECT_DOUBLE_EQ(fpr_per_hour(2, 36000.0), 0.2);
  EXPECT_EQ(fpr_per_hour(0, 100.0), 0.0);
  EXPECT_DOUBLE_EQ(fpr_per_hour(1, 1800.0), 2.0);
  EXPECT_THROW(fpr_per_hour(1, 0.0), ConfigError);
}

TEST(Roc, Shapes) {
  const auto separated = roc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<Label>{P, P, I, I});
  EXPECT_NE(std::find(separated.points.begin(), separated.points.end(), RocPoint{0.0, 1.0}), separated.points.end());
  const auto flat = roc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<Label>{P, I, I});
  EXPECT_EQ(flat.points, (std::vector<RocPoint>{{0.0, 0.0}, {1.0, 1.0}}));
  EXPECT_THROW(roc(std::vector<double>{0.1, 0.2}, std::vector<Label>{P, P}), InputError);
}

TEST(Roc, EndpointsAndMonotone) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<Label> l;
    const std::size_t n = 2 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(8)));
      l.push_back(i == 0 ? P : (i == 1 ? I : (rng.uniform() < 0.5 ? P : I)));
    }
    const auto c = roc(s, l);
    EXPECT_EQ(c.points.front(), (RocPoint{0.0, 0.0}));
    EXPECT_EQ(c.points.back(), (RocPoint{1.0, 1.0}));
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
      EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
    }
  }
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc_of({0.9, 0.8, 0.1, 0.2}, {P, P, I, I}), 1.0);
  EXPECT_DOUBLE_EQ(auc_of({0.6, 0.4, 0.8}, {P, I, I}), 0.5);
  EXPECT_DOUBLE_EQ(auc_of({0.5, 0.5, 0.5, 0.5}, {P, I, P, I}), 0.5);
}

TEST(Auc, EqualsMannWhitneyWithTies) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s;
    std::vector<Label> l;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(trial % 2 == 0 ? static_cast<double>(rng.below(10)) : rng.normal());
      l.push_back(i == 0 ? P : (i == 1 ? I : (rng.uniform() < 0.4 ? P : I)));
    }
    EXPECT_NEAR(auc_of(s, l), mann_whitney(s, l), 1e-9);
  }
}

TEST(Auc, RandomScoresNearChance) {
  Rng rng(23);
  std::vector<double> s;
  std::vector<Label> l;
  for (int i = 0; i < 200; ++i) {
    s.push_back(rng.uniform());
    l.push_back(i % 2 == 0 ? P : I);
  }
  EXPECT_NEAR(auc_of(s, l), 0.5, 0.1);
}

std::vector<SpikeCounts> margins(const std::vector<int>& m) {
  std::vector<SpikeCounts> out;
  for (int v : m) out.push_back(SpikeCounts{{static_cast<std::uint32_t>(5 + v), 5u}, 20});
  return out;
}

TEST(ThresholdSweep, HandEvaluatedMargins) {
  const auto counts = margins({5, 4, -1, -3});
  const std::vector<Label> labels{P, P, I, I};
  const std::vector<std::int64_t> thresholds{0, 4, 10};
  const auto rows = threshold_sweep(counts, labels, thresholds);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].metrics.acc.value, 1.0);
  EXPECT_EQ(rows[1].metrics.sen.value, 0.5);
  EXPECT_EQ(rows[1].metrics.fpr.value, 0.0);
  EXPECT_EQ(rows[2].metrics.sen.value, 0.0);
  EXPECT_EQ(rows[2].metrics.fpr.value, 0.0);
}

TEST(ThresholdSweep, ZeroThresholdIsPlainDecide) {
  Rng rng(2);
  std::vector<SpikeCounts> counts;
  std::vector<Label> labels;
  for (int i = 0; i < 50; ++i) {
    counts.push_back(SpikeCounts{{static_cast<std::uint32_t>(rng.below(11)), static_cast<std::uint32_t>(rng.below(11))}, 10});
    labels.push_back(rng.uniform() < 0.5 ? P : I);
  }
  std::vector<Label> predicted;
  for (const auto& c : counts) predicted.push_back(decide(c, 0));
  const std::vector<std::int64_t> zero{0};
  EXPECT_EQ(threshold_sweep(counts, labels, zero)[0].confusion, confusion(predicted, labels));
}

TEST(Csv, MetricsAndPredictions) {
  const auto counts = margins({5, -1});
  const std::vector<Label> labels{P, I};
  const auto thresholds = default_count_thresholds();
  const auto text = metrics_csv(threshold_sweep(counts, labels, thresholds));
  EXPECT_EQ(text.substr(0, text.find('\n')), "threshold,acc,sen,fpr");
  EXPECT_NE(text.find("\n0,1.000000,1.000000,0.000000\n"), std::string::npos);

  const std::vector<PredictionRow> rows{{0, P, 7, 3, 0.4, P}, {1, I, 2, 2, 0.0, I}};
  const auto parsed = parse_predictions_csv(predictions_csv(rows));
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0].count_p, 7u);
  EXPECT_EQ(parsed[1].label, I);
  EXPECT_DOUBLE_EQ(parsed[0].score, 0.4);
  EXPECT_THROW(parse_predictions_csv("bad header\n"), InputError);
  EXPECT_EQ(roc_csv(RocCurve{{{0.0, 0.0}, {1.0, 1.0}}}), "fpr,tpr\n0.000000,0.000000\n1.000000,1.000000\n");
}

}  // namespace
}  // namespace spikecnn
