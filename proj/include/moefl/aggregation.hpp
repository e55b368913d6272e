// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-experts aggregation: simplex weights over the round's client
// models and their weighted average.
//
// Weighting rules, with w0 the server model and w_n the client models:
//   fedavg        rho_n = 1/N
//   softmax       rho_n ~ exp(<w0, w_n>)
//   opt_exact     argmin_{rho in simplex} sum_n rho_n ||w_n - w0||
//                 (a vertex: equal mass on every client tied at the minimum)
//   opt_entropic  rho_n ~ exp(-||w_n - w0|| / tau), the entropy-smoothed LP
//   utility       opt_exact with the cost passed through u in {id, ln, exp}
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moefl/error.hpp"
#include "moefl/nn.hpp"

namespace moefl {

/// Nonnegative weights that sum to one. Construction checks the simplex
/// contract with a 1e-9 tolerance.
class SimplexWeights {
 public:
  static constexpr double kContractTol = 1e-9;

  SimplexWeights() = default;
  explicit SimplexWeights(std::vector<double> rho) : rho_(std::move(rho)) {
    if (rho_.empty()) throw ContractError("simplex weights: empty");
    double sum = 0.0;
    for (double r : rho_) {
      if (!std::isfinite(r) || r < -kContractTol || r > 1.0 + kContractTol)
        throw ContractError("simplex weights: entry " + std::to_string(r) + " outside [0,1]");
      sum += r;
    }
    if (std::abs(sum - 1.0) > kContractTol)
      throw ContractError("simplex weights: entries sum to " + std::to_string(sum));
  }

  std::size_t size() const noexcept { return rho_.size(); }
  double operator[](std::size_t i) const noexcept { return rho_[i]; }
  auto begin() const noexcept { return rho_.begin(); }
  auto end() const noexcept { return rho_.end(); }
  const std::vector<double>& values() const noexcept { return rho_; }

  bool operator==(const SimplexWeights&) const = default;

 private:
  std::vector<double> rho_;
};

enum class AggregatorMethod { fedavg, softmax, opt_exact, opt_entropic, utility };
enum class UtilityKind { linear, log, exp };

inline std::string to_string(UtilityKind u) {
  switch (u) {
    case UtilityKind::linear: return "linear";
    case UtilityKind::log: return "log";
    case UtilityKind::exp: return "exp";
  }
  return "?";
}

struct AggregatorKind {
  AggregatorMethod method = AggregatorMethod::opt_exact;
  UtilityKind utility = UtilityKind::linear;
  /// Entropic temperature; unset means 0.1 x the round's smallest distance.
  std::optional<double> tau;
  double tie_tol = 1e-12;

  std::string name() const {
    switch (method) {
      case AggregatorMethod::fedavg: return "fedavg";
      case AggregatorMethod::softmax: return "softmax";
      case AggregatorMethod::opt_exact: return "opt_exact";
      case AggregatorMethod::opt_entropic: return "opt_entropic";
      case AggregatorMethod::utility: return "utility_" + to_string(utility);
    }
    return "?";
  }

  void validate() const {
    if (tau && !(*tau > 0.0 && std::isfinite(*tau))) throw InputError("aggregator tau must be > 0");
    if (!(tie_tol >= 0.0)) throw InputError("aggregator tie_tol must be >= 0");
  }
};

namespace detail {

inline void check_cohort(const ParamVector& w0, const std::vector<ParamVector>& clients) {
  if (clients.empty()) throw InputError("aggregation: empty cohort");
  for (const auto& w : clients)
    if (w.size() != w0.size()) throw InputError("aggregation: parameter vector length mismatch");
}

}  // namespace detail

inline std::vector<double> client_distances(const ParamVector& w0, const std::vector<ParamVector>& clients) {
  detail::check_cohort(w0, clients);
  std::vector<double> d(clients.size());
  for (std::size_t n = 0; n < clients.size(); ++n) d[n] = param_dist(clients[n], w0);
  return d;
}

inline SimplexWeights weights_uniform(std::size_t n) {
  if (n == 0) throw InputError("weights_uniform: n must be >= 1");
  return SimplexWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

/// Normalized exp(scores) with the maximum subtracted first.
inline SimplexWeights softmax_from_scores(std::span<const double> scores) {
  if (scores.empty()) throw InputError("softmax: empty score vector");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> rho(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += rho[i] = std::exp(scores[i] - m);
  for (double& r : rho) r /= sum;
  return SimplexWeights(std::move(rho));
}

inline SimplexWeights weights_softmax(const ParamVector& w0, const std::vector<ParamVector>& clients) {
  detail::check_cohort(w0, clients);
  std::vector<double> dots(clients.size());
  for (std::size_t n = 0; n < clients.size(); ++n) dots[n] = param_dot(w0, clients[n]);
  return softmax_from_scores(dots);
}

/// Vertex solution of min sum rho_n cost_n over the simplex: equal mass on
/// every entry within tie_tol of the minimum cost.
inline SimplexWeights lp_vertex_weights(std::span<const double> costs, double tie_tol) {
  if (costs.empty()) throw InputError("lp_vertex_weights: empty cost vector");
  if (!(tie_tol >= 0.0)) throw InputError("lp_vertex_weights: tie_tol must be >= 0");
  const double lo = *std::min_element(costs.begin(), costs.end());
  std::vector<double> rho(costs.size(), 0.0);
  std::size_t support = 0;
  for (double c : costs) support += c <= lo + tie_tol ? 1 : 0;
  for (std::size_t i = 0; i < costs.size(); ++i)
    if (costs[i] <= lo + tie_tol) rho[i] = 1.0 / static_cast<double>(support);
  return SimplexWeights(std::move(rho));
}

inline SimplexWeights weights_opt_exact(const ParamVector& w0, const std::vector<ParamVector>& clients,
                                        double tie_tol) {
  const std::vector<double> d = client_distances(w0, clients);
  return lp_vertex_weights(d, tie_tol);
}

/// rho_n ~ exp(-(d_n - min d) / tau).
inline SimplexWeights softmin_weights(std::span<const double> distances, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("opt_entropic: tau must be > 0");
  std::vector<double> scores(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) scores[i] = -distances[i] / tau;
  return softmax_from_scores(scores);
}

inline SimplexWeights weights_opt_entropic(const ParamVector& w0, const std::vector<ParamVector>& clients,
                                           double tau) {
  const std::vector<double> d = client_distances(w0, clients);
  return softmin_weights(d, tau);
}

/// Default temperature: 0.1 x the smallest distance in the cohort, so a
/// model k times farther than the nearest one is down-weighted by
/// exp(-10 (k - 1)). Returns 0 when some model coincides with w0.
inline double default_entropic_tau(std::span<const double> distances) {
  if (distances.empty()) return 0.0;
  return 0.1 * *std::min_element(distances.begin(), distances.end());
}

inline constexpr double kUtilityLogFloor = 1e-12;

inline double apply_utility(UtilityKind u, double cost) {
  switch (u) {
    case UtilityKind::linear: return cost;
    case UtilityKind::log: return std::log(std::max(cost, kUtilityLogFloor));
    case UtilityKind::exp: return std::exp(cost);
  }
  return cost;
}

/// opt_exact on u(||w_n - w0||).
inline SimplexWeights weights_utility(UtilityKind u, const ParamVector& w0,
                                      const std::vector<ParamVector>& clients, double tie_tol) {
  std::vector<double> costs = client_distances(w0, clients);
  for (double& c : costs) c = apply_utility(u, c);
  return lp_vertex_weights(costs, tie_tol);
}

/// Dispatches on `kind`. For opt_entropic without an explicit tau the
/// temperature is derived from the cohort; a zero minimum (some model equal
/// to w0) falls back to the exact LP, which is the tau -> 0 limit.
inline SimplexWeights compute_weights(const AggregatorKind& kind, const ParamVector& w0,
                                      const std::vector<ParamVector>& clients) {
  kind.validate();
  switch (kind.method) {
    case AggregatorMethod::fedavg:
      detail::check_cohort(w0, clients);
      return weights_uniform(clients.size());
    case AggregatorMethod::softmax:
      return weights_softmax(w0, clients);
    case AggregatorMethod::opt_exact:
      return weights_opt_exact(w0, clients, kind.tie_tol);
    case AggregatorMethod::opt_entropic: {
      const std::vector<double> d = client_distances(w0, clients);
      const double tau = kind.tau ? *kind.tau : default_entropic_tau(d);
      if (tau > 0.0) return softmin_weights(d, tau);
      return lp_vertex_weights(d, kind.tie_tol);
    }
    case AggregatorMethod::utility:
      return weights_utility(kind.utility, w0, clients, kind.tie_tol);
  }
  throw InputError("unknown aggregator");
}

/// sum_n rho_n w_n
inline ParamVector aggregate(const SimplexWeights& rho, const std::vector<ParamVector>& clients) {
  if (rho.size() != clients.size() || clients.empty())
    throw ContractError("aggregate: " + std::to_string(rho.size()) + " weights for " +
                        std::to_string(clients.size()) + " models");
  ParamVector out(clients.front().size(), 0.0);
  for (std::size_t n = 0; n < clients.size(); ++n) {
    if (clients[n].size() != out.size()) throw InputError("aggregate: parameter vector length mismatch");
    const double r = rho[n];
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += r * clients[n][i];
  }
  return out;
}

}  // namespace moefl
