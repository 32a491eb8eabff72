#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "spikecnn/spike_encoder.hpp"

namespace spikecnn {
namespace {

// Independent normal CDF by Simpson integration of the density.
double phi_oracle(double z) {
  const double lo = -12.0;
  if (z <= lo) return 0.0;
  const int n = 20000;
  const double h = (z - lo) / n;
  auto pdf = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
  double s = pdf(lo) + pdf(z);
  for (int i = 1; i < n; ++i) s += pdf(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

Tensor<double> row(const std::vector<double>& values) {
  return Tensor<double>(std::vector<std::size_t>{1, 1, values.size()}, values);
}

TEST(SpikeEncoder, NormalCdfMatchesIntegral) {
  for (double z : {-3.0, -1.5, -0.2, 0.0, 0.7, 2.0, 3.0}) EXPECT_NEAR(standard_normal_cdf(z), phi_oracle(z), 1e-9);
}

TEST(SpikeEncoder, RateFollowsNormalCdf) {
  const EncoderConfig cfg = make_encoder_config(20000, 50.0, -50.0, 17);
  std::vector<double> xs;
  for (int k = -3; k <= 3; ++k) xs.push_back(cfg.mean() + k * cfg.sigma);
  const auto rate = spike_rate(encode(row(xs), cfg));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_NEAR(rate[i], phi_oracle((xs[i] - cfg.mean()) / cfg.sigma), 0.015) << "x=" << xs[i];
  }
}

TEST(SpikeEncoder, MeanValueFiresHalfTheTime) {
  const EncoderConfig cfg{10000, 1.0, -1.0, 1.0, 3};
  const auto rate = spike_rate(encode(row({0.0}), cfg));
  EXPECT_NEAR(rate[0], 0.5, 0.02);
}

TEST(SpikeEncoder, ExtremeValuesSaturate) {
  const EncoderConfig cfg{1000, 1.0, -1.0, 1.0, 4};
  const auto rate = spike_rate(encode(row({1e6, -1e6}), cfg));
  EXPECT_EQ(rate[0], 1.0);
  EXPECT_EQ(rate[1], 0.0);
}

TEST(SpikeEncoder, DeterministicGivenSeed) {
  const EncoderConfig cfg{50, 1.0, -1.0, 1.0, 99};
  const auto x = row({-0.5, 0.1, 0.3, 1.2});
  EXPECT_EQ(encode(x, cfg), encode(x, cfg));
  EncoderConfig other = cfg;
  other.seed = 100;
  EXPECT_NE(encode(x, cfg), encode(x, other));
}

TEST(SpikeEncoder, RateIsMonotoneInValue) {
  const EncoderConfig cfg{2000, 1.0, -1.0, 1.0, 8};
  const auto rate = spike_rate(encode(row({-2.0, -0.5, 0.0, 0.4, 1.9}), cfg));
  for (std::size_t i = 1; i < rate.size(); ++i) EXPECT_LT(rate[i - 1], rate[i]);
}

TEST(SpikeEncoder, ExpectedRateMatchesDefinition) {
  const EncoderConfig cfg = make_encoder_config(10, 50.0, -50.0, 0);
  EXPECT_DOUBLE_EQ(cfg.sigma, 50.0);
  EXPECT_NEAR(expected_rate(50.0, cfg), phi_oracle(1.0), 1e-9);
  EXPECT_NEAR(expected_rate(-100.0, cfg), phi_oracle(-2.0), 1e-9);
}

TEST(SpikeEncoder, RejectsBadConfig) {
  const auto x = row({0.0});
  EXPECT_THROW(encode(x, EncoderConfig{0, 1.0, -1.0, 1.0, 0}), ConfigError);
  EXPECT_THROW(encode(x, EncoderConfig{10, -1.0, 1.0, 1.0, 0}), ConfigError);
  EXPECT_THROW(encode(x, EncoderConfig{10, 1.0, -1.0, 0.0, 0}), ConfigError);
  EXPECT_THROW(encode(row({std::nan("")}), EncoderConfig{}), InputError);
}

TEST(SpikeEncoder, SerializationRoundTrip) {
  const EncoderConfig cfg{7, 1.0, -1.0, 1.0, 5};
  Tensor<double> x(Shape3{2, 3, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(static_cast<double>(i));
  const auto train = encode(x, cfg);
  const auto bytes = serialize_spike_train(train);
  EXPECT_EQ(bytes.size(), 24u + (7u * 30u + 7u) / 8u);
  EXPECT_EQ(deserialize_spike_train(bytes), train);
}

TEST(SpikeEncoder, DeserializeRejectsDamage) {
  const auto train = encode(row({0.0, 1.0}), EncoderConfig{3, 1.0, -1.0, 1.0, 1});
  auto bytes = serialize_spike_train(train);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_spike_train(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(deserialize_spike_train(bad_version), UnsupportedError);
  bytes.pop_back();
  EXPECT_THROW(deserialize_spike_train(bytes), FormatError);
}

}  // namespace
}  // namespace spikecnn
