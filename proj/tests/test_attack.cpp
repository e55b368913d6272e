// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "moefl/attack.hpp"

using namespace moefl;

TEST(AttackKind, NamesRoundTrip) {
  for (AttackKind k : {AttackKind::random_weights, AttackKind::additive_noise, AttackKind::negative_weight,
                       AttackKind::label_flip_static, AttackKind::label_flip_adaptive, AttackKind::pixel_shuffle})
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  EXPECT_FALSE(parse_attack_kind("krum").has_value());
}

TEST(LabelFlip, IdentityMapLeavesDataUnchanged) {
  const Dataset ds = gen_synthetic(4, 3, 5, 0.2, 1);
  const std::vector<int> id{0, 1, 2, 3};
  EXPECT_EQ(apply_label_map(ds, id), ds);
}

TEST(LabelFlip, DerangementHasNoFixedPoint) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_derangement(10, rng);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NE(m[i], static_cast<int>(i));
    std::vector<int> s = m;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], static_cast<int>(i));
  }
}

TEST(LabelFlip, StaticReusesRoundZeroPermutation) {
  const Dataset ds = gen_synthetic(10, 3, 4, 0.2, 1);
  Rng r1 = poisoning_stream(7, AttackKind::label_flip_static, 2, 1);
  Rng r2 = poisoning_stream(7, AttackKind::label_flip_static, 2, 5);
  EXPECT_EQ(poison_dataset(ds, AttackKind::label_flip_static, r1), poison_dataset(ds, AttackKind::label_flip_static, r2));
}

TEST(LabelFlip, AdaptiveRedrawsPerRound) {
  const Dataset ds = gen_synthetic(10, 3, 4, 0.2, 1);
  Rng r1 = poisoning_stream(7, AttackKind::label_flip_adaptive, 2, 1);
  Rng r2 = poisoning_stream(7, AttackKind::label_flip_adaptive, 2, 2);
  const Dataset a = poison_dataset(ds, AttackKind::label_flip_adaptive, r1);
  const Dataset b = poison_dataset(ds, AttackKind::label_flip_adaptive, r2);
  EXPECT_NE(a.labels, b.labels);
  EXPECT_EQ(a.features, ds.features);
}

TEST(PixelShuffle, PreservesMultisetLabelAndShape) {
  const Dataset ds = gen_synthetic(3, 8, 5, 0.2, 1);
  Rng rng(4);
  const Dataset p = poison_dataset(ds, AttackKind::pixel_shuffle, rng);
  ASSERT_EQ(p.size(), ds.size());
  ASSERT_EQ(p.dim, ds.dim);
  EXPECT_EQ(p.labels, ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<double> a(ds.row(i).begin(), ds.row(i).end()), b(p.row(i).begin(), p.row(i).end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(PoisonDataset, RejectsModelAttacks) {
  const Dataset ds = gen_synthetic(3, 2, 2, 0.2, 1);
  Rng rng(1);
  EXPECT_THROW(poison_dataset(ds, AttackKind::negative_weight, rng), InputError);
}

TEST(ForgeModel, NegativeWeightNegatesBroadcast) {
  Rng rng(1);
  const ParamVector b{0.5, -2.0};
  const ParamVector out = forge_model(AttackKind::negative_weight, ParamVector{9.0, 9.0}, b, 1.0, rng);
  EXPECT_EQ(out, (ParamVector{-0.5, 2.0}));
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(out[i] + b[i], 0.0);
}

TEST(ForgeModel, ZeroNoiseKeepsHonestModel) {
  Rng rng(1);
  const ParamVector h{1.0, 2.0, 3.0};
  EXPECT_EQ(forge_model(AttackKind::additive_noise, h, ParamVector(3, 0.0), 0.0, rng), h);
}

TEST(ForgeModel, RandomWeightsMoments) {
  Rng rng(2024);
  const ParamVector h(1000, 5.0);
  const ParamVector w = forge_model(AttackKind::random_weights, h, h, 1.0, rng);
  double mean = 0.0;
  for (double v : w) mean += v / 1000.0;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean) / 999.0;
  EXPECT_GT(mean, -0.15);
  EXPECT_LT(mean, 0.15);
  EXPECT_GT(std::sqrt(var), 0.9);
  EXPECT_LT(std::sqrt(var), 1.1);
}

TEST(ForgeModel, LengthMismatchThrows) {
  Rng rng(1);
  EXPECT_THROW(forge_model(AttackKind::negative_weight, ParamVector{1.0}, ParamVector{1.0, 2.0}, 1.0, rng),
               InputError);
}

TEST(ForgeModel, DeterministicForStream) {
  Rng a(5), b(5);
  const ParamVector h{1.0, 2.0};
  EXPECT_EQ(forge_model(AttackKind::additive_noise, h, h, 0.5, a), forge_model(AttackKind::additive_noise, h, h, 0.5, b));
}
