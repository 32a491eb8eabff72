#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "spikecnn/conversion.hpp"
#include "spikecnn/random.hpp"

namespace spikecnn {
namespace {

SpikeTrain bernoulli_train(Rng& rng, std::uint32_t steps, Shape3 frame, const std::vector<double>& p) {
  SpikeTrain train(steps, frame);
  for (std::uint32_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < frame.size(); ++i) train.set(t, i, rng.uniform() < p[i % p.size()]);
  }
  return train;
}

TEST(MapWeights, CopiesWeightsBitForBit) {
  const auto spec = default_topology(Shape3{1, 2, 200});
  const auto w = init_weights<float>(spec, 3);
  const auto model = map_weights(spec, w);
  const auto sources = source_layer_indices(spec);
  ASSERT_EQ(model.weights.layers.size(), w.layers.size());
  for (const auto& p : model.weights.layers) {
    const auto& src = w.at(sources[p.layer_index]);
    EXPECT_EQ(p.weights, src.weights);
    EXPECT_EQ(p.bias, src.bias);
  }
  EXPECT_EQ(source_weights(model), w);
}

TEST(MapWeights, DropsReluAndKeepsProvenance) {
  const auto spec = default_topology(Shape3{1, 2, 200});
  const auto model = map_weights(spec, init_weights<float>(spec, 1));
  std::size_t conv = 0, pool = 0, relu_layers = 0;
  for (const auto& l : model.spec.layers) {
    conv += std::holds_alternative<Conv1D>(l);
    pool += std::holds_alternative<MaxPool1D>(l);
    relu_layers += std::holds_alternative<Relu>(l);
  }
  EXPECT_EQ(conv, 5u);
  EXPECT_EQ(pool, 5u);
  EXPECT_EQ(relu_layers, 0u);
  EXPECT_NE(fingerprint(model.spec), fingerprint(spec));
  EXPECT_EQ(model.source_fingerprint(), fingerprint(spec));
  for (const auto& c : model.if_cfgs) {
    EXPECT_EQ(c.v_th, 1.0);
    EXPECT_EQ(c.v_rest, 0.0);
    EXPECT_EQ(c.leak, 0.0);
  }
}

TEST(MapWeights, RejectsFingerprintMismatch) {
  const auto spec = default_topology(Shape3{1, 2, 200});
  auto w = init_weights<float>(spec, 1);
  w.fingerprint += 1;
  EXPECT_THROW(map_weights(spec, w), StructuralError);
}

SnnModel single_fc_model(float weight) {
  const NetworkSpec spec{Shape3{1, 1, 1}, {FullyConnected{1, 1}}};
  auto w = zero_weights<float>(spec);
  w.layers[0].weights[0] = weight;
  return map_weights(spec, w);
}

TEST(Calibration, MaxNormalisationTakesPeakInput) {
  auto model = single_fc_model(2.0F);
  SpikeTrain on(10, Shape3{1, 1, 1});
  for (std::uint32_t t = 0; t < 10; ++t) on.set(t, 0, true);
  SpikeTrain half(10, Shape3{1, 1, 1});
  for (std::uint32_t t = 0; t < 10; t += 2) half.set(t, 0, true);
  const std::vector<SpikeTrain> set{half, on};
  const auto report = calibrate_thresholds(model, set);
  EXPECT_DOUBLE_EQ(model.if_cfgs[0].v_th, 2.0);
  EXPECT_EQ(report.thresholds, (std::vector<double>{2.0}));
  EXPECT_TRUE(report.warnings.empty());
  EXPECT_NE(model.calibration.find("max-activation"), std::string::npos);
}

TEST(Calibration, PercentileUsesPositiveInputs) {
  const NetworkSpec spec{Shape3{4, 1, 1}, {FullyConnected{4, 4}}};
  auto w = zero_weights<float>(spec);
  for (std::size_t i = 0; i < 4; ++i) w.layers[0].weights[i * 4 + i] = static_cast<float>(i + 1);
  auto model = map_weights(spec, w);
  SpikeTrain on(4, spec.input);
  for (std::uint32_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 4; ++i) on.set(t, i, true);
  }
  const std::vector<SpikeTrain> set{on};
  calibrate_thresholds(model, set, {50.0});
  EXPECT_DOUBLE_EQ(model.if_cfgs[0].v_th, 2.0);
  EXPECT_THROW(calibrate_thresholds(model, set, {0.0}), ConfigError);
}

TEST(Calibration, SilentSetFallsBackWithWarning) {
  auto model = single_fc_model(2.0F);
  const std::vector<SpikeTrain> set{SpikeTrain(5, Shape3{1, 1, 1})};
  const auto report = calibrate_thresholds(model, set);
  EXPECT_EQ(model.if_cfgs[0].v_th, 1.0);
  ASSERT_EQ(report.warnings.size(), 1u);
  EXPECT_THROW(calibrate_thresholds(model, std::span<const SpikeTrain>{}), InputError);
}

struct Labelled {
  std::vector<SpikeTrain> trains;
  std::vector<Label> labels;
};

// Two inputs, one per class, each driving its own output neuron; the
// preictal output needs a higher threshold to stay quiet on noise.
Labelled two_input_set(Rng& rng, std::size_t n) {
  Labelled out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    out.trains.push_back(bernoulli_train(rng, 20, Shape3{2, 1, 1}, pos ? std::vector<double>{0.7, 0.3} : std::vector<double>{0.3, 0.5}));
    out.labels.push_back(pos ? Label::preictal : Label::interictal);
  }
  return out;
}

SnnModel two_input_model() {
  const NetworkSpec spec{Shape3{2, 1, 1}, {FullyConnected{2, 2}}};
  auto w = zero_weights<float>(spec);
  w.layers[0].weights[0] = 1.0F;
  w.layers[0].weights[3] = 1.0F;
  return map_weights(spec, w);
}

TEST(Calibration, GridPicksBestWithSmallestOnTies) {
  Rng rng(3);
  const auto data = two_input_set(rng, 40);
  const std::vector<double> grid{2.0, 0.5, 1.0};
  auto model = two_input_model();
  calibrate_thresholds_grid(model, data.trains, data.labels, grid);

  // oracle: evaluate every grid value for layer 0 independently
  auto probe = two_input_model();
  double best_acc = -1.0;
  double best = 0.0;
  for (double g : {0.5, 1.0, 2.0}) {
    probe.if_cfgs[0].v_th = g;
    const double acc = snn_accuracy(probe, data.trains, data.labels);
    if (acc > best_acc) {
      best_acc = acc;
      best = g;
    }
  }
  EXPECT_EQ(model.if_cfgs[0].v_th, best);
  EXPECT_DOUBLE_EQ(snn_accuracy(model, data.trains, data.labels), best_acc);

  // every candidate equally good on a silent set: smallest wins
  auto silent = two_input_model();
  const std::vector<SpikeTrain> quiet{SpikeTrain(5, Shape3{2, 1, 1}), SpikeTrain(5, Shape3{2, 1, 1})};
  const std::vector<Label> labels{Label::interictal, Label::preictal};
  calibrate_thresholds_grid(silent, quiet, labels, grid);
  EXPECT_EQ(silent.if_cfgs[0].v_th, 0.5);
}

TEST(Calibration, ScaleRefinementKeepsOutputAndNeverHurts) {
  const NetworkSpec spec{Shape3{2, 1, 1}, {FullyConnected{2, 4}, FullyConnected{4, 2}}};
  auto w = zero_weights<float>(spec);
  Rng rng(9);
  for (auto& p : w.layers) {
    for (auto& v : p.weights.values()) v = static_cast<float>(rng.normal(0.5, 0.5));
  }
  auto model = map_weights(spec, w);
  set_reset_mode(model, ResetMode::subtract_threshold);
  const auto data = two_input_set(rng, 30);
  calibrate_thresholds(model, data.trains);
  const double before = snn_accuracy(model, data.trains, data.labels);
  const double out_th = model.if_cfgs[1].v_th;
  const double hidden_th = model.if_cfgs[0].v_th;
  const std::vector<double> candidates{1.0, 0.5, 0.75};
  refine_threshold_scale(model, data.trains, data.labels, candidates);
  EXPECT_EQ(model.if_cfgs[1].v_th, out_th);
  const double factor = model.if_cfgs[0].v_th / hidden_th;
  EXPECT_TRUE(std::any_of(candidates.begin(), candidates.end(), [&](double c) { return std::abs(c - factor) < 1e-12; }));
  EXPECT_GE(snn_accuracy(model, data.trains, data.labels), before);
  EXPECT_THROW(refine_threshold_scale(model, data.trains, data.labels, {}), ConfigError);
  EXPECT_THROW(refine_threshold_scale(model, data.trains, data.labels, {-1.0}), ConfigError);
}

// Scaling a layer's weights, bias and v_th by the same power of two scales the
// membrane exactly, so the spike output cannot change.
TEST(ThresholdScaling, SpikeOutputInvariant) {
  Rng rng(12);
  const Conv1D conv{1, 3, 2, 3, 1};
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<float> w(std::vector<std::size_t>{3, 2, 1, 3});
    for (auto& v : w.values()) v = static_cast<float>(rng.normal());
    Tensor<float> b(std::vector<std::size_t>{3});
    for (auto& v : b.values()) v = static_cast<float>(rng.normal(0.0, 0.1));
    const double v_th = 0.5 + rng.uniform();
    for (float k : {0.25F, 2.0F, 8.0F}) {
      Tensor<float> ws = w, bs = b;
      for (auto& v : ws.values()) v *= k;
      for (auto& v : bs.values()) v *= k;
      const IfConfig base{v_th, 0.0, 0.0, ResetMode::subtract_threshold};
      const IfConfig scaled{v_th * k, 0.0, 0.0, ResetMode::subtract_threshold};
      auto s1 = MembraneState::at_rest(Shape3{3, 1, 8}, base);
      auto s2 = MembraneState::at_rest(Shape3{3, 1, 8}, scaled);
      for (int t = 0; t < 50; ++t) {
        SpikeFrame in(Shape3{2, 1, 10});
        for (auto& v : in.values()) v = rng.uniform() < 0.5 ? 1 : 0;
        const auto a = if_step_inplace(s1, spiking_conv1d(in, conv, w, b), base);
        const auto c = if_step_inplace(s2, spiking_conv1d(in, conv, ws, bs), scaled);
        ASSERT_EQ(a, c);
      }
    }
  }
}

SnnModel random_model(std::uint64_t seed) {
  const auto spec = default_topology(Shape3{1, 2, 64}, 3, {2, 3}, 2, 5, 2);
  auto model = map_weights(spec, init_weights<float>(spec, seed));
  Rng rng(seed);
  for (auto& c : model.if_cfgs) {
    c.v_th = 0.5 + rng.uniform();
    c.leak = rng.uniform() * 0.1;
    c.reset = rng.uniform() < 0.5 ? ResetMode::to_rest : ResetMode::subtract_threshold;
  }
  model.calibration = "test";
  model.pooling = PoolMode::rate_gated;
  return model;
}

TEST(ModelFile, RoundTrip) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto model = random_model(seed);
    EXPECT_EQ(deserialize_model(serialize_model(model)), model);
  }
}

TEST(ModelFile, CorruptMagicNamesOffset) {
  auto bytes = serialize_model(random_model(1));
  bytes[1] = 'X';
  try {
    deserialize_model(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(ModelFile, NewerVersionIsUnsupported) {
  auto bytes = serialize_model(random_model(1));
  bytes[4] = 2;
  EXPECT_THROW(deserialize_model(bytes), UnsupportedError);
}

TEST(ModelFile, TruncationAndBadMetadata) {
  auto bytes = serialize_model(random_model(2));
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  EXPECT_THROW(deserialize_model(cut), FormatError);

  auto model = random_model(2);
  auto text = serialize_model(model);
  const std::string needle = "rate_gated";
  auto it = std::search(text.begin(), text.end(), needle.begin(), needle.end());
  ASSERT_NE(it, text.end());
  *it = 'x';
  EXPECT_THROW(deserialize_model(text), FormatError);
}

}  // namespace
}  // namespace spikecnn
