// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc diagnostics: detection thresholds, aggregation-bias statistics,
// rho summaries and a two-component PCA of model parameters.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "moefl/aggregation.hpp"
#include "moefl/data.hpp"
#include "moefl/error.hpp"
#include "moefl/metrics.hpp"
#include "moefl/nn.hpp"
#include "moefl/rng.hpp"
#include "moefl/simulator.hpp"

namespace moefl {

/// Constants of the smoothness / noise / heterogeneity assumptions.
/// Index 1 refers to legitimate clients, index 2 to attackers.
struct BoundParams {
  double L1 = 1.0, L2 = 1.0;
  double sigma1 = 0.0, sigma2 = 0.0;
  double eta1 = 0.0, eta2 = 0.0;
  /// Bound on the global gradient norm at the optimum (the bare eta term of
  /// the impure threshold).
  double eta = 0.0;
  /// Bound on the optimum's norm.
  double B = 1.0;
  double R = 1.0;  ///< communication rounds
  double K = 1.0;  ///< local steps per round
  double N = 1.0;
  double E = 0.0;

  void validate() const {
    for (double v : {L1, L2, sigma1, sigma2, eta1, eta2, eta, B, R, K, N, E})
      if (!std::isfinite(v) || v < 0.0) throw InputError("BoundParams: values must be finite and >= 0");
    if (B <= 0.0) throw InputError("BoundParams: B must be positive");
    if (R < 1.0 || K < 1.0 || N < 1.0) throw InputError("BoundParams: R, K and N must be >= 1");
    if (E > N) throw InputError("BoundParams: E must not exceed N");
  }
};

namespace detail {

/// Optimization-error term: L/t + sigma / sqrt(n K t) with t = R / B^2.
/// The noise part is dropped when n = 0.
inline double opt_error(double L, double sigma, double n, const BoundParams& p) {
  const double t = p.R / (p.B * p.B);
  double v = L / t;
  if (n > 0.0) v += sigma / std::sqrt(n * p.K * t);
  return v;
}

/// Heterogeneity term: (L eta^2 B^4)^(1/3) / R^(2/3) + (L sigma^2 B^4)^(1/3) / (K^(1/3) R^(2/3)).
inline double hetero_error(double L, double eta, double sigma, const BoundParams& p) {
  const double B4 = std::pow(p.B, 4.0);
  const double R23 = std::pow(p.R, 2.0 / 3.0);
  return std::cbrt(L * eta * eta * B4) / R23 + std::cbrt(L * sigma * sigma * B4) / (std::cbrt(p.K) * R23);
}

}  // namespace detail

/// Attacker noise level above which a pure-D0 server separates attackers:
/// 2 (varsigma + nu).
inline double lemma2_pure_threshold(const BoundParams& p) {
  p.validate();
  return 2.0 * (detail::opt_error(p.L1, p.sigma1, p.N, p) + detail::hetero_error(p.L1, p.eta1, p.sigma1, p));
}

/// Every term of the impure-D0 threshold, kept separate for auditing.
///
/// Reading of the printed formula:
///   threshold = varsigma + eta + (N-E)/N (eta1 + nu1) + E/N (eta2 + nu2)
/// where varsigma = (N-E)/N varsigma1 + E/N varsigma2 (the optimization error
/// of a server trained on the mixed data), eta is the global gradient bound
/// BoundParams::eta, and the "(eta1)2" factor inside nu1 is read as a square.
struct Lemma2ImpureTerms {
  double varsigma1 = 0.0, varsigma2 = 0.0;
  double nu1 = 0.0, nu2 = 0.0;
  double varsigma = 0.0;
  double eta = 0.0;
  double legitimate_term = 0.0;
  double attacker_term = 0.0;
  double total = 0.0;
};

inline Lemma2ImpureTerms lemma2_impure_terms(const BoundParams& p) {
  p.validate();
  Lemma2ImpureTerms t;
  const double legit = p.N - p.E;
  const double w_legit = legit / p.N;
  const double w_att = p.E / p.N;
  t.varsigma1 = detail::opt_error(p.L1, p.sigma1, legit, p);
  t.varsigma2 = detail::opt_error(p.L2, p.sigma2, p.E, p);
  t.nu1 = detail::hetero_error(p.L1, p.eta1, p.sigma1, p);
  t.nu2 = detail::hetero_error(p.L2, p.eta2, p.sigma2, p);
  t.varsigma = w_legit * t.varsigma1 + w_att * t.varsigma2;
  t.eta = p.eta;
  t.legitimate_term = w_legit * (p.eta1 + t.nu1);
  t.attacker_term = w_att * (p.eta2 + t.nu2);
  t.total = t.varsigma + t.eta + t.legitimate_term + t.attacker_term;
  return t;
}

inline double lemma2_impure_threshold(const BoundParams& p) { return lemma2_impure_terms(p).total; }

/// ||sum rho_n w_n - w0||
inline double bias_statistic(const SimplexWeights& rho, const std::vector<ParamVector>& clients,
                             const ParamVector& w0) {
  for (const auto& w : clients)
    if (w.size() != w0.size()) throw InputError("bias_statistic: parameter vector length mismatch");
  return param_dist(aggregate(rho, clients), w0);
}

enum class BiasScenario { noniid_clean, impure, pure };

inline BiasScenario parse_bias_scenario(std::string_view s) {
  if (s == "noniid_clean") return BiasScenario::noniid_clean;
  if (s == "impure") return BiasScenario::impure;
  if (s == "pure") return BiasScenario::pure;
  throw InputError("unknown bias scenario '" + std::string(s) + "'");
}

/// Closed-form bias bounds:
///   noniid_clean  2 N eta1 + sigma1
///   impure        (N-E)(sigma1 + eta1) + E (sigma2 + eta2)
///   pure          (N-E)(sigma1 + eta1) + E eta2
inline double bias_bound(const BoundParams& p, BiasScenario scenario) {
  p.validate();
  const double legit = (p.N - p.E) * (p.sigma1 + p.eta1);
  switch (scenario) {
    case BiasScenario::noniid_clean: return 2.0 * p.N * p.eta1 + p.sigma1;
    case BiasScenario::impure: return legit + p.E * (p.sigma2 + p.eta2);
    case BiasScenario::pure: return legit + p.E * p.eta2;
  }
  throw InputError("unknown bias scenario");
}

// ---------------------------------------------------------------------------
// PCA

struct Pca2Result {
  std::vector<std::array<double, 2>> projections;
  std::array<double, 2> explained_variance{0.0, 0.0};
  /// Unit principal directions in column space (empty when variance is 0).
  std::array<std::vector<double>, 2> components;
};

namespace detail {

using DenseMatrix = std::vector<std::vector<double>>;

struct EigenPair {
  double value = 0.0;
  std::vector<double> vector;
};

/// Dominant eigenpair of a symmetric PSD matrix by power iteration, stopping
/// once ||A v - lambda v|| <= tol * max(1, ||A||_F).
inline EigenPair power_iteration(const DenseMatrix& A, double tol = 1e-10, std::size_t max_iter = 2'000'000) {
  const std::size_t n = A.size();
  double fro = 0.0;
  for (const auto& row : A)
    for (double v : row) fro += v * v;
  fro = std::sqrt(fro);
  EigenPair out{0.0, std::vector<double>(n, 0.0)};
  if (fro == 0.0) return out;

  Rng rng(0x5EEDULL);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> v(n), Av(n);
  for (double& x : v) x = u(rng);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  normalize(v);
  const double scale = std::max(1.0, fro);
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += A[i][j] * v[j];
      Av[i] = s;
    }
    lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) lambda += v[i] * Av[i];
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += (Av[i] - lambda * v[i]) * (Av[i] - lambda * v[i]);
    if (std::sqrt(res) <= tol * scale) break;
    if (normalize(Av) == 0.0) {
      lambda = 0.0;
      break;
    }
    v.swap(Av);
  }
  out.value = std::max(lambda, 0.0);
  out.vector = std::move(v);
  return out;
}

}  // namespace detail

/// Top-2 principal components of the rows. Rows are mean-centered; the
/// eigenproblem is solved on the smaller of the covariance and Gram matrices
/// by power iteration with deflation. Each direction is signed so its first
/// nonzero loading is positive. Variances use the n-1 denominator.
inline Pca2Result pca2(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw InputError("pca2: need at least 2 rows");
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  if (d < 2) throw InputError("pca2: need at least 2 columns");
  for (const auto& r : rows)
    if (r.size() != d) throw InputError("pca2: ragged input");

  detail::DenseMatrix X(n, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += rows[i][j];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) X[i][j] = rows[i][j] - mean;
  }

  const bool gram = n < d;
  const std::size_t m = gram ? n : d;
  detail::DenseMatrix A(m, std::vector<double>(m, 0.0));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a; b < m; ++b) {
      double s = 0.0;
      if (gram) {
        for (std::size_t j = 0; j < d; ++j) s += X[a][j] * X[b][j];
      } else {
        for (std::size_t i = 0; i < n; ++i) s += X[i][a] * X[i][b];
      }
      A[a][b] = A[b][a] = s;
    }

  Pca2Result out;
  out.projections.assign(n, {0.0, 0.0});
  const double denom = static_cast<double>(n - 1);
  double top = 0.0;
  for (int k = 0; k < 2; ++k) {
    detail::EigenPair ep = detail::power_iteration(A);
    if (k == 0) top = ep.value;
    // Remaining spectrum at rounding level counts as zero variance.
    if (ep.value <= 1e-14 * std::max(top, 1e-300) || ep.value == 0.0) break;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) A[a][b] -= ep.value * ep.vector[a] * ep.vector[b];

    std::vector<double> dir(d, 0.0);
    if (gram) {
      const double inv = 1.0 / std::sqrt(ep.value);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += X[i][j] * ep.vector[i];
        dir[j] = s * inv;
      }
    } else {
      dir = ep.vector;
    }
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    const auto first = std::find_if(dir.begin(), dir.end(), [](double v) { return std::abs(v) > 1e-12; });
    if (first != dir.end() && *first < 0.0)
      for (double& v : dir) v = -v;

    out.explained_variance[static_cast<std::size_t>(k)] = ep.value / denom;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += X[i][j] * dir[j];
      out.projections[i][static_cast<std::size_t>(k)] = s;
    }
    out.components[static_cast<std::size_t>(k)] = std::move(dir);
  }
  return out;
}

// ---------------------------------------------------------------------------
// rho summaries

struct RhoRoundSummary {
  std::size_t round = 0;
  double attacker_mass = 0.0;
  double legitimate_mass = 0.0;
  double max_attacker_rho = 0.0;
  std::size_t attackers_in_cohort = 0;
  std::size_t zero_rho_count = 0;
};

/// Upper edges of the rho histogram buckets; bucket 0 holds exact zeros.
inline constexpr std::array<double, 6> kRhoBucketEdges{0.0, 2.5e-8, 1e-4, 1e-2, 1e-1, 1.0};

struct RhoReport {
  std::vector<RhoRoundSummary> rounds;
  double cumulative_attacker_mass = 0.0;
  double cumulative_legitimate_mass = 0.0;
  double max_attacker_rho = 0.0;
  std::array<std::size_t, kRhoBucketEdges.size()> attacker_histogram{};
  std::array<std::size_t, kRhoBucketEdges.size()> legitimate_histogram{};
};

inline std::vector<Role> roles_from_attackers(std::size_t population, const std::vector<std::size_t>& attacker_ids) {
  std::vector<Role> roles(population, Role::legitimate);
  for (std::size_t a : attacker_ids) {
    if (a >= population) throw InputError("attacker id outside population");
    roles[a] = Role::attacker;
  }
  return roles;
}

inline std::size_t rho_bucket(double rho) {
  for (std::size_t b = 0; b < kRhoBucketEdges.size(); ++b)
    if (rho <= kRhoBucketEdges[b]) return b;
  return kRhoBucketEdges.size() - 1;
}

inline RhoReport rho_report(const std::vector<RoundRecord>& records, const std::vector<Role>& roles) {
  if (records.empty()) throw InputError("rho_report: no records");
  RhoReport rep;
  for (const RoundRecord& r : records) {
    RhoRoundSummary s;
    s.round = r.round;
    for (std::size_t i = 0; i < r.cohort.size(); ++i) {
      if (r.cohort[i] >= roles.size()) throw InputError("rho_report: cohort id outside roles");
      const double rho = r.rho[i];
      s.zero_rho_count += rho == 0.0 ? 1 : 0;
      if (roles[r.cohort[i]] == Role::attacker) {
        s.attacker_mass += rho;
        s.max_attacker_rho = std::max(s.max_attacker_rho, rho);
        ++s.attackers_in_cohort;
        ++rep.attacker_histogram[rho_bucket(rho)];
      } else {
        s.legitimate_mass += rho;
        ++rep.legitimate_histogram[rho_bucket(rho)];
      }
    }
    rep.cumulative_attacker_mass += s.attacker_mass;
    rep.cumulative_legitimate_mass += s.legitimate_mass;
    rep.max_attacker_rho = std::max(rep.max_attacker_rho, s.max_attacker_rho);
    rep.rounds.push_back(s);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Empirical bound-constant estimates. These are sampling heuristics for
// orientation, not certified constants.

struct BoundEstimateInputs {
  ModelSpec spec;
  ParamVector w;
  std::vector<Dataset> legitimate;
  std::vector<Dataset> attackers;
  std::size_t batch_size = 20;
  std::size_t batches_per_client = 8;
  double R = 1.0, K = 1.0, N = 1.0, E = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

struct GroupEstimate {
  double sigma = 0.0, eta = 0.0, L = 0.0;
};

inline GroupEstimate estimate_group(const BoundEstimateInputs& in, const std::vector<Dataset>& group, Rng& rng) {
  GroupEstimate g;
  std::size_t used = 0;
  for (const Dataset& data : group) {
    if (data.empty()) continue;
    ++used;
    const Gradient full = loss_and_grad(in.spec, in.w, data).grad;
    g.eta += param_norm(ParamVector(full.values()));
    double sigma = 0.0;
    for (std::size_t b = 0; b < in.batches_per_client; ++b) {
      std::vector<std::size_t> batch(std::min(in.batch_size, data.size()));
      for (auto& i : batch) i = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
      sigma += param_dist(loss_and_grad(in.spec, in.w, data, batch).grad.span(), full.span());
    }
    g.sigma += sigma / static_cast<double>(in.batches_per_client);
    // Secant along a random direction of length 1e-3 (relative to ||w||).
    ParamVector shifted = in.w;
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamVector dir(in.w.size());
    for (double& v : dir) v = normal(rng);
    const double step = 1e-3 * std::max(1.0, param_norm(in.w)) / std::max(param_norm(dir), 1e-300);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += step * dir[i];
    const Gradient moved = loss_and_grad(in.spec, shifted, data).grad;
    g.L = std::max(g.L, param_dist(moved.span(), full.span()) / param_dist(shifted, in.w));
  }
  if (used > 0) {
    g.sigma /= static_cast<double>(used);
    g.eta /= static_cast<double>(used);
  }
  return g;
}

}  // namespace detail

inline BoundParams estimate_bound_params(const BoundEstimateInputs& in) {
  Rng rng(derive_seed(in.seed, "estimate_bounds"));
  const auto legit = detail::estimate_group(in, in.legitimate, rng);
  const auto att = detail::estimate_group(in, in.attackers, rng);
  BoundParams p;
  p.L1 = legit.L;
  p.L2 = in.attackers.empty() ? legit.L : att.L;
  p.sigma1 = legit.sigma;
  p.sigma2 = att.sigma;
  p.eta1 = legit.eta;
  p.eta2 = att.eta;
  std::vector<Dataset> all = in.legitimate;
  all.insert(all.end(), in.attackers.begin(), in.attackers.end());
  Dataset pooled;
  for (const auto& d : all) pooled.append(d);
  p.eta = pooled.empty() ? 0.0 : param_norm(ParamVector(loss_and_grad(in.spec, in.w, pooled).grad.values()));
  p.B = std::max(param_norm(in.w), 1e-12);
  p.R = in.R;
  p.K = in.K;
  p.N = in.N;
  p.E = in.E;
  return p;
}

}  // namespace moefl
