// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "moefl/aggregation.hpp"
#include "moefl/metrics.hpp"
#include "oracles.hpp"

using namespace moefl;

namespace {

/// Client models at the given distances from w0 = 0 (along distinct axes).
std::vector<ParamVector> at_distances(const std::vector<double>& d) {
  std::vector<ParamVector> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ParamVector w(d.size(), 0.0);
    w[i] = d[i];
    out.push_back(w);
  }
  return out;
}

void expect_simplex(const SimplexWeights& rho) {
  double s = 0.0;
  for (double r : rho) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    s += r;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
}

}  // namespace

TEST(SimplexWeights, ContractChecks) {
  EXPECT_NO_THROW(SimplexWeights({0.2, 0.8}));
  EXPECT_THROW(SimplexWeights({0.2, 0.7}), ContractError);
  EXPECT_THROW(SimplexWeights({-0.5, 1.5}), ContractError);
  EXPECT_THROW(SimplexWeights(std::vector<double>{}), ContractError);
}

TEST(WeightsUniform, Examples) {
  EXPECT_EQ(weights_uniform(4).values(), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_EQ(weights_uniform(1).values(), (std::vector<double>{1.0}));
  const auto r = weights_uniform(30).values();
  EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-12);
  EXPECT_THROW(weights_uniform(0), InputError);
}

TEST(WeightsSoftmax, Examples) {
  const ParamVector w0{1.0, 0.0};
  const auto rho = weights_softmax(w0, {ParamVector{1.0, 0.0}, ParamVector{0.0, 1.0}});
  EXPECT_NEAR(rho[0], 0.73106, 1e-5);
  EXPECT_NEAR(rho[1], 0.26894, 1e-5);
  EXPECT_NEAR(rho[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_EQ(weights_softmax(w0, {ParamVector{3.0, 1.0}}).values(), (std::vector<double>{1.0}));
  const auto same = weights_softmax(w0, {ParamVector{2.0, 1.0}, ParamVector{2.0, 1.0}, ParamVector{2.0, 1.0}});
  for (double r : same) EXPECT_NEAR(r, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(weights_softmax(w0, {ParamVector{1.0}}), InputError);
}

TEST(WeightsSoftmax, ShiftInvariance) {
  const std::vector<double> s{0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 123.456;
  const auto a = softmax_from_scores(s), b = softmax_from_scores(shifted);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(WeightsSoftmax, LargeDotsStayFinite) {
  const ParamVector w0{100.0};
  const auto rho = weights_softmax(w0, {ParamVector{100.0}, ParamVector{99.0}});
  expect_simplex(rho);
}

TEST(WeightsOptExact, Examples) {
  const ParamVector w0(3, 0.0);
  EXPECT_EQ(weights_opt_exact(w0, at_distances({5, 1, 7}), 1e-12).values(), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(weights_opt_exact(w0, at_distances({2, 2, 9}), 1e-12).values(), (std::vector<double>{0.5, 0.5, 0}));
}

TEST(WeightsOptExact, MatchesSimplexGridOracle) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(inst % 4) + 1;
    std::vector<ParamVector> clients;
    ParamVector w0(6);
    for (double& v : w0) v = u(rng);
    for (std::size_t k = 0; k < n; ++k) {
      ParamVector w(6);
      for (double& v : w) v = u(rng);
      clients.push_back(w);
    }
    const auto d = client_distances(w0, clients);
    const auto rho = weights_opt_exact(w0, clients, 1e-12);
    expect_simplex(rho);
    double obj = 0.0;
    for (std::size_t k = 0; k < n; ++k) obj += rho[k] * d[k];
    EXPECT_LE(obj, oracle::simplex_grid_min(d) + 1e-12);
    const double lo = *std::min_element(d.begin(), d.end());
    for (std::size_t k = 0; k < n; ++k)
      if (rho[k] > 0.0) {
        EXPECT_LE(d[k], lo + 1e-12);
      }
  }
}

TEST(WeightsOptEntropic, Examples) {
  const ParamVector w0(2, 0.0);
  const auto rho = weights_opt_entropic(w0, {ParamVector{0.0, 0.0}, ParamVector{1.0, 0.0}}, 1.0);
  EXPECT_NEAR(rho[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(rho[1], std::exp(-1.0) / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(rho[0], 0.73106, 1e-5);

  const ParamVector z(3, 0.0);
  for (double r : weights_opt_entropic(z, at_distances({2, 2, 2}), 0.5)) EXPECT_NEAR(r, 1.0 / 3.0, 1e-15);
  for (double r : weights_opt_entropic(z, at_distances({1, 4, 9}), 1e9)) EXPECT_NEAR(r, 1.0 / 3.0, 1e-6);
  EXPECT_THROW(weights_opt_entropic(z, at_distances({1, 2, 3}), 0.0), InputError);
}

TEST(WeightsOptEntropic, StrictlyDecreasingInDistance) {
  const ParamVector z(4, 0.0);
  const auto rho = weights_opt_entropic(z, at_distances({0.5, 1.0, 1.5, 3.0}), 0.7);
  for (std::size_t i = 0; i + 1 < rho.size(); ++i) EXPECT_GT(rho[i], rho[i + 1]);
}

TEST(WeightsOptEntropic, DefaultTemperatureFromNearestModel) {
  const std::vector<double> d{2.0, 4.0, 1.0};
  EXPECT_DOUBLE_EQ(default_entropic_tau(d), 0.1);
  AggregatorKind k;
  k.method = AggregatorMethod::opt_entropic;
  const ParamVector z(3, 0.0);
  const auto rho = compute_weights(k, z, at_distances(d));
  EXPECT_NEAR(rho[2], 1.0, 1e-4);
  EXPECT_NEAR(rho[0], std::exp(-10.0) / (1.0 + std::exp(-10.0) + std::exp(-30.0)), 1e-15);
}

TEST(WeightsUtility, MonotoneUtilitiesKeepArgmin) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  for (int inst = 0; inst < 30; ++inst) {
    std::vector<double> d(5);
    for (double& v : d) v = u(rng);
    if (inst % 5 == 0) d[3] = d[1];
    const ParamVector z(5, 0.0);
    const auto clients = at_distances(d);
    const auto base = weights_opt_exact(z, clients, 1e-12);
    for (UtilityKind k : {UtilityKind::linear, UtilityKind::log, UtilityKind::exp}) {
      const auto rho = weights_utility(k, z, clients, 1e-12);
      for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(rho[i] > 0.0, base[i] > 0.0) << to_string(k);
    }
  }
}

TEST(WeightsUtility, LogFloorHandlesZeroDistance) {
  EXPECT_EQ(apply_utility(UtilityKind::log, 0.0), std::log(kUtilityLogFloor));
  const ParamVector z(2, 0.0);
  const auto rho = weights_utility(UtilityKind::log, z, {ParamVector{0.0, 0.0}, ParamVector{0.0, 1.0}}, 1e-12);
  EXPECT_EQ(rho.values(), (std::vector<double>{1.0, 0.0}));
}

TEST(ComputeWeights, AllKindsSatisfySimplex) {
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int inst = 0; inst < 25; ++inst) {
    ParamVector w0(10);
    for (double& v : w0) v = g(rng);
    std::vector<ParamVector> clients(1 + static_cast<std::size_t>(inst % 7), ParamVector(10));
    for (auto& c : clients)
      for (double& v : c) v = g(rng);
    for (AggregatorMethod m : {AggregatorMethod::fedavg, AggregatorMethod::softmax, AggregatorMethod::opt_exact,
                               AggregatorMethod::opt_entropic, AggregatorMethod::utility}) {
      AggregatorKind k;
      k.method = m;
      expect_simplex(compute_weights(k, w0, clients));
    }
  }
}

TEST(Aggregate, Examples) {
  const SimplexWeights rho({0.25, 0.75});
  EXPECT_EQ(aggregate(rho, {ParamVector{0.0, 0.0}, ParamVector{4.0, 8.0}}), (ParamVector{3.0, 6.0}));
  const std::vector<ParamVector> c{ParamVector{1.0, 2.0}, ParamVector{3.0, 4.0}, ParamVector{5.0, 6.0}};
  EXPECT_EQ(aggregate(SimplexWeights({0.0, 1.0, 0.0}), c), c[1]);
  EXPECT_THROW(aggregate(SimplexWeights({1.0}), c), ContractError);
}

TEST(Aggregate, UniformMatchesArithmeticMean) {
  Rng rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ParamVector> c(7, ParamVector(50));
  std::vector<std::vector<double>> raw;
  for (auto& w : c) {
    for (double& v : w) v = g(rng);
    raw.push_back(w.values());
  }
  const ParamVector got = aggregate(weights_uniform(c.size()), c);
  const auto ref = oracle::mean_of(raw);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

TEST(WeightedTrainLoss, Examples) {
  const std::vector<double> l{1.0, 2.0};
  EXPECT_NEAR(weighted_train_loss(SimplexWeights({0.2, 0.8}), l), 1.8, 1e-15);
  EXPECT_NEAR(weighted_train_loss(weights_uniform(2), l), 1.5, 1e-15);
  EXPECT_EQ(weighted_train_loss(SimplexWeights({0.0, 1.0}), l), 2.0);
  EXPECT_THROW(weighted_train_loss(weights_uniform(3), l), ContractError);
}
