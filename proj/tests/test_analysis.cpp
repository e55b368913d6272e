// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "moefl/analysis.hpp"
#include "oracles.hpp"

using namespace moefl;

namespace {

BoundParams unit_params() {
  BoundParams p;
  p.L1 = 1;
  p.sigma1 = 1;
  p.eta1 = 1;
  p.B = 1;
  p.R = 4;
  p.K = 1;
  p.N = 1;
  return p;
}

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (double& v : r) v = g(rng);
  return rows;
}

/// Checks pca2 against a dense Jacobi eigendecomposition of the covariance.
void expect_matches_oracle(const std::vector<std::vector<double>>& rows) {
  const Pca2Result got = pca2(rows);
  const auto [vals, vecs] = oracle::jacobi_eigen(oracle::covariance(rows));
  const auto mean = oracle::mean_of(rows);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(got.explained_variance[k], vals[k], 1e-8);
    // Projection on oracle eigenvector k, compared up to a global sign.
    double sign = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < mean.size(); ++j) p += (rows[i][j] - mean[j]) * vecs[j][k];
      if (sign == 0.0 && std::abs(p) > 1e-6) sign = (p * got.projections[i][k] >= 0.0) ? 1.0 : -1.0;
      EXPECT_NEAR(got.projections[i][k], (sign == 0.0 ? 1.0 : sign) * p, 1e-6) << "row " << i << " component " << k;
    }
  }
}

}  // namespace

TEST(Lemma2Pure, HandComputedExample) {
  const double nu = 2.0 * std::pow(4.0, -2.0 / 3.0);
  EXPECT_NEAR(lemma2_pure_threshold(unit_params()), 2.0 * (0.75 + nu), 1e-12);
  EXPECT_NEAR(lemma2_pure_threshold(unit_params()), 3.0874, 1e-4);
}

TEST(Lemma2Pure, NoiseFreeLeavesOnlyCurvatureTerm) {
  BoundParams p = unit_params();
  p.sigma1 = p.eta1 = 0;
  p.L1 = 2.5;
  p.B = 1.5;
  p.R = 7;
  EXPECT_NEAR(lemma2_pure_threshold(p), 2.0 * 2.5 * 1.5 * 1.5 / 7.0, 1e-12);
  for (double r = 1; r < 1e6; r *= 2) {
    BoundParams q = p;
    q.R = r;
    BoundParams q2 = p;
    q2.R = 2 * r;
    EXPECT_LT(lemma2_pure_threshold(q2), lemma2_pure_threshold(q));
  }
}

TEST(Lemma2Pure, InvalidParamsThrow) {
  for (auto set : {+[](BoundParams& p) { p.R = 0; }, +[](BoundParams& p) { p.B = 0; },
                   +[](BoundParams& p) { p.K = 0; }, +[](BoundParams& p) { p.N = 0; }}) {
    BoundParams p = unit_params();
    set(p);
    EXPECT_THROW(lemma2_pure_threshold(p), InputError);
  }
}

TEST(Lemma2Pure, MonotoneOnRandomSweep) {
  Rng rng(99);
  std::uniform_real_distribution<double> u(0.1, 3.0), r(1.0, 500.0);
  for (int i = 0; i < 100; ++i) {
    BoundParams p;
    p.L1 = u(rng);
    p.sigma1 = u(rng);
    p.eta1 = u(rng);
    p.B = u(rng);
    p.R = r(rng);
    p.K = 1 + std::floor(u(rng) * 5);
    p.N = 1 + std::floor(u(rng) * 10);
    const double base = lemma2_pure_threshold(p);
    for (double BoundParams::*f : {&BoundParams::L1, &BoundParams::sigma1, &BoundParams::eta1, &BoundParams::B}) {
      BoundParams q = p;
      q.*f *= 1.5;
      EXPECT_GE(lemma2_pure_threshold(q), base);
    }
    BoundParams q = p;
    q.R *= 1.5;
    EXPECT_LE(lemma2_pure_threshold(q), base);
  }
}

TEST(Lemma2Impure, NoAttackersCollapsesToLegitimateTerms) {
  BoundParams p = unit_params();
  p.N = 10;
  p.E = 0;
  p.eta = 0.3;
  const auto t = lemma2_impure_terms(p);
  EXPECT_EQ(t.attacker_term, 0.0);
  EXPECT_NEAR(t.total, t.varsigma1 + 0.3 + p.eta1 + t.nu1, 1e-12);
}

TEST(Lemma2Impure, AllAttackersZeroLegitimateWeight) {
  BoundParams p = unit_params();
  p.N = 5;
  p.E = 5;
  p.sigma2 = 2;
  p.eta2 = 2;
  const auto t = lemma2_impure_terms(p);
  EXPECT_EQ(t.legitimate_term, 0.0);
  EXPECT_NEAR(t.total, t.varsigma2 + p.eta + p.eta2 + t.nu2, 1e-12);
}

TEST(Lemma2Impure, IncreasesWithAttackerCount) {
  BoundParams p = unit_params();
  p.N = 10;
  p.R = 50;
  p.sigma1 = p.eta1 = 0.1;
  p.sigma2 = p.eta2 = 1.0;
  double prev = -1.0;
  for (double e = 2; e <= 8; ++e) {
    p.E = e;
    const double v = lemma2_impure_threshold(p);
    EXPECT_GT(v, prev);
    prev = v;
  }
  p.E = 11;
  EXPECT_THROW(lemma2_impure_threshold(p), InputError);
}

TEST(BiasStatistic, Examples) {
  const ParamVector w0{1.0, 0.0};
  EXPECT_EQ(bias_statistic(weights_uniform(3), {w0, w0, w0}, w0), 0.0);
  EXPECT_EQ(bias_statistic(SimplexWeights({0.0, 1.0}), {ParamVector{5, 5}, ParamVector{4, 0}}, w0), 3.0);
  EXPECT_EQ(bias_statistic(weights_uniform(2), {ParamVector{0, 0}, ParamVector{2, 0}}, w0), 0.0);
  EXPECT_THROW(bias_statistic(weights_uniform(1), {ParamVector{1.0}}, w0), InputError);
}

TEST(BiasBound, Examples) {
  BoundParams p;
  p.N = 10;
  p.E = 3;
  p.sigma1 = p.eta1 = 0.1;
  p.sigma2 = p.eta2 = 1.0;
  EXPECT_NEAR(bias_bound(p, BiasScenario::impure), 7.4, 1e-9);
  EXPECT_NEAR(bias_bound(p, BiasScenario::impure) - bias_bound(p, BiasScenario::pure), p.E * p.sigma2, 1e-12);
  EXPECT_NEAR(bias_bound(p, BiasScenario::noniid_clean), 2 * 10 * 0.1 + 0.1, 1e-12);
  p.E = 0;
  EXPECT_EQ(bias_bound(p, BiasScenario::impure), bias_bound(p, BiasScenario::pure));
  EXPECT_EQ(parse_bias_scenario("pure"), BiasScenario::pure);
  EXPECT_THROW(parse_bias_scenario("mixed"), InputError);
}

TEST(Pca2, MatchesDenseOracleOnRandomMatrices) {
  Rng rng(123);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 3 + static_cast<std::size_t>(inst % 6);
    const std::size_t d = 2 + static_cast<std::size_t>((inst * 7) % 7);
    expect_matches_oracle(random_rows(n, d, rng));
  }
}

TEST(Pca2, ThreeByThreeCase) {
  expect_matches_oracle({{2.0, 0.0, 1.0}, {0.0, 1.0, -1.0}, {1.0, 3.0, 0.5}});
}

TEST(Pca2, CollinearPointsHaveRankOne) {
  std::vector<std::vector<double>> rows;
  for (double t : {-2.0, 0.5, 1.0, 3.0, 4.5}) rows.push_back({t, 2 * t, -t, 0.5 * t, 3.0});
  EXPECT_LE(pca2(rows).explained_variance[1], 1e-9);
}

TEST(Pca2, RankZeroGivesZeros) {
  const auto r = pca2({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
  EXPECT_EQ(r.explained_variance[0], 0.0);
  EXPECT_EQ(r.explained_variance[1], 0.0);
  for (const auto& p : r.projections) {
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], 0.0);
  }
}

TEST(Pca2, TranslationInvariant) {
  Rng rng(5);
  auto rows = random_rows(7, 4, rng);
  const auto a = pca2(rows);
  for (auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += 10.0 + static_cast<double>(j);
  const auto b = pca2(rows);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a.projections[i][k], b.projections[i][k], 1e-8);
}

TEST(Pca2, RejectsTooSmallInput) {
  EXPECT_THROW(pca2({{1.0, 2.0}}), InputError);
  EXPECT_THROW(pca2({{1.0}, {2.0}}), InputError);
}

TEST(RhoReport, Examples) {
  RoundRecord r1;
  r1.round = 1;
  r1.cohort = {0, 2};
  r1.rho = {0.0, 1.0};
  RoundRecord r2;
  r2.round = 2;
  r2.cohort = {1, 2};
  r2.rho = {0.25, 0.75};
  const auto clean = rho_report({r1, r2}, roles_from_attackers(3, {}));
  for (const auto& s : clean.rounds) EXPECT_EQ(s.attacker_mass, 0.0);
  EXPECT_EQ(clean.cumulative_legitimate_mass, 2.0);

  const auto rep = rho_report({r1, r2}, roles_from_attackers(3, {2}));
  EXPECT_EQ(rep.rounds[0].attacker_mass, 1.0);
  EXPECT_EQ(rep.rounds[1].attacker_mass, 0.75);
  EXPECT_EQ(rep.max_attacker_rho, 1.0);
  EXPECT_EQ(rep.rounds[0].zero_rho_count, 1u);
  EXPECT_EQ(rep.legitimate_histogram[0], 1u);
  EXPECT_EQ(rho_bucket(1.0), rho_bucket(0.75));
  EXPECT_EQ(rep.attacker_histogram[rho_bucket(1.0)], 2u);
  EXPECT_THROW(rho_report({}, roles_from_attackers(3, {})), InputError);
}
