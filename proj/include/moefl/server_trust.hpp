// SPDX-License-Identifier: Apache-2.0
//
// Server model w0 and the curation of its shared dataset D0.
//
// Curation mechanisms, given trusted clients T and untrusted clients U:
//   online      start from T's data; admit U one client at a time, reject a
//               client (and mark it as an outlier) when admitting it moves w0
//               by at least d0.
//   stochastic  repeatedly draw a sample of U's pooled data, take one step,
//               discard the step and drop the sample when w0 moves by >= d0.
//   sorted      train on U's batches first and T's batches last.
#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "moefl/dataset.hpp"
#include "moefl/error.hpp"
#include "moefl/nn.hpp"
#include "moefl/rng.hpp"

namespace moefl {

struct TrainParams {
  std::size_t epochs = 1;
  double lr = 0.01;
  std::size_t batch_size = 20;
};

struct ServerState {
  ParamVector w0;
  Dataset curated;
  /// Indexed by client id; set only by curation.
  std::vector<bool> outlier;
  /// Curation threshold; 0 while uncalibrated.
  double d0 = 0.0;

  void mark_outlier(std::size_t client) {
    if (outlier.size() <= client) outlier.resize(client + 1, false);
    outlier[client] = true;
  }
  bool is_outlier(std::size_t client) const {
    return client < outlier.size() && outlier[client];
  }

  bool operator==(const ServerState&) const = default;
};

/// Warm-started SGD on the curated data.
inline ServerState train_server(ServerState state, const ModelSpec& spec, const TrainParams& params, Rng& rng) {
  if (state.curated.empty()) throw ConfigError("server dataset D0 is empty", "server");
  if (params.epochs == 0) return state;
  state.w0 = train_local(spec, std::move(state.w0), state.curated, params.epochs, params.lr,
                         params.batch_size, rng);
  return state;
}

/// 3 x median ||delta w|| over `warmup` consecutive applications of `update`
/// starting from w.
template <class Update>
double calibrate_d0(ParamVector w, Update&& update, std::size_t warmup = 10, double multiplier = 3.0) {
  if (warmup == 0) throw InputError("calibrate_d0: warmup must be >= 1");
  std::vector<double> deltas;
  deltas.reserve(warmup);
  for (std::size_t i = 0; i < warmup; ++i) {
    ParamVector next = update(w);
    deltas.push_back(param_dist(next, w));
    w = std::move(next);
  }
  std::sort(deltas.begin(), deltas.end());
  const std::size_t n = deltas.size();
  const double median = n % 2 == 1 ? deltas[n / 2] : 0.5 * (deltas[n / 2 - 1] + deltas[n / 2]);
  return multiplier * median;
}

/// Calibration with one-epoch updates on the trusted data (online curation).
inline double calibrate_d0_epochs(const ModelSpec& spec, const ParamVector& w, const Dataset& trusted,
                                  double lr, std::size_t batch_size, Rng& rng) {
  return calibrate_d0(w, [&](const ParamVector& cur) {
    return train_local(spec, cur, trusted, 1, lr, batch_size, rng);
  });
}

namespace detail {

inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

inline ParamVector sgd_step(const ModelSpec& spec, const ParamVector& w, const Dataset& data,
                            std::span<const std::size_t> batch, double lr) {
  const LossAndGradient lg = loss_and_grad(spec, w, data, batch);
  ParamVector out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] - lr * lg.grad[i];
  return out;
}

}  // namespace detail

/// Calibration with single SGD steps on random trusted samples (stochastic curation).
inline double calibrate_d0_steps(const ModelSpec& spec, const ParamVector& w, const Dataset& trusted,
                                 std::size_t sample_size, double lr, Rng& rng) {
  if (trusted.empty()) throw ConfigError("d0 calibration needs trusted data", "server.trusted_clients");
  std::vector<std::size_t> all(trusted.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return calibrate_d0(w, [&](const ParamVector& cur) {
    const auto batch = detail::draw_without_replacement(all, sample_size, rng);
    return detail::sgd_step(spec, cur, trusted, batch, lr);
  });
}

struct CandidateData {
  std::size_t client = 0;
  Dataset data;
};

struct CurationDecision {
  /// Client id (online) or iteration index (stochastic).
  std::size_t key = 0;
  double delta = 0.0;
  bool accepted = false;
  /// Pool indices drawn in this iteration (stochastic only).
  std::vector<std::size_t> samples;
};

struct CurationOutcome {
  ServerState state;
  std::vector<CurationDecision> decisions;

  std::size_t accepted_count() const {
    return static_cast<std::size_t>(
        std::count_if(decisions.begin(), decisions.end(), [](const auto& d) { return d.accepted; }));
  }
};

/// Online curation. w0 is first trained for `init.epochs` on the trusted
/// data; each candidate then gets a one-epoch retrain on (curated + its data).
inline CurationOutcome curate_online(ServerState state, const ModelSpec& spec, const Dataset& trusted,
                                     const std::vector<CandidateData>& untrusted, double d0,
                                     const TrainParams& init, Rng& rng) {
  if (trusted.empty()) throw ConfigError("online curation needs trusted data", "server.trusted_clients");
  if (!(d0 > 0.0)) throw InputError("curate_online: d0 must be > 0");
  state.curated = trusted;
  state.d0 = d0;
  state = train_server(std::move(state), spec, init, rng);

  CurationOutcome out;
  for (const CandidateData& cand : untrusted) {
    Dataset tentative = state.curated;
    tentative.append(cand.data);
    ParamVector trial = train_local(spec, state.w0, tentative, 1, init.lr, init.batch_size, rng);
    const double delta = param_dist(trial, state.w0);
    const bool accept = delta < d0;
    out.decisions.push_back({cand.client, delta, accept, {}});
    if (accept) {
      state.curated = std::move(tentative);
      state.w0 = std::move(trial);
    } else {
      state.mark_outlier(cand.client);
    }
  }
  out.state = std::move(state);
  return out;
}

/// Stochastic curation over a pooled dataset. Accepted steps update w0;
/// rejected steps are discarded and their samples leave the pool. The
/// remaining pool is appended to the curated data.
inline CurationOutcome curate_stochastic(ServerState state, const ModelSpec& spec, const Dataset& pool,
                                         double d0, std::size_t iters, std::size_t sample_size, double lr,
                                         Rng& rng) {
  if (pool.empty()) throw ConfigError("stochastic curation needs a nonempty pool", "server.curation");
  if (iters == 0) throw InputError("curate_stochastic: iters must be >= 1");
  if (sample_size == 0) throw InputError("curate_stochastic: sample_size must be >= 1");
  if (!(d0 > 0.0)) throw InputError("curate_stochastic: d0 must be > 0");
  state.d0 = d0;

  std::vector<std::size_t> live(pool.size());
  std::iota(live.begin(), live.end(), std::size_t{0});
  CurationOutcome out;
  for (std::size_t it = 0; it < iters && !live.empty(); ++it) {
    std::vector<std::size_t> batch = detail::draw_without_replacement(live, sample_size, rng);
    ParamVector trial = detail::sgd_step(spec, state.w0, pool, batch, lr);
    const double delta = param_dist(trial, state.w0);
    const bool accept = delta < d0;
    if (accept) {
      state.w0 = std::move(trial);
    } else {
      std::vector<std::size_t> sorted = batch;
      std::sort(sorted.begin(), sorted.end());
      std::erase_if(live, [&](std::size_t i) { return std::binary_search(sorted.begin(), sorted.end(), i); });
    }
    out.decisions.push_back({it, delta, accept, std::move(batch)});
  }
  std::sort(live.begin(), live.end());
  Dataset kept = pool.subset(live);
  state.curated.append(kept);
  out.state = std::move(state);
  return out;
}

/// Splits into contiguous batches of batch_size (last may be shorter).
inline std::vector<Dataset> make_batches(const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw InputError("make_batches: batch_size must be >= 1");
  std::vector<Dataset> out;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    out.push_back(data.subset(idx));
  }
  return out;
}

struct ScheduledBatch {
  Dataset data;
  bool trusted = false;
};

/// Untrusted batches first, trusted batches last.
inline std::vector<ScheduledBatch> order_sorted(const std::vector<Dataset>& untrusted,
                                                const std::vector<Dataset>& trusted) {
  if (untrusted.empty() && trusted.empty())
    throw ConfigError("sorted curation needs trusted or untrusted data", "server.curation");
  std::vector<ScheduledBatch> schedule;
  schedule.reserve(untrusted.size() + trusted.size());
  for (const auto& b : untrusted) schedule.push_back({b, false});
  for (const auto& b : trusted) schedule.push_back({b, true});
  return schedule;
}

/// One SGD step per scheduled batch, in schedule order.
inline ParamVector train_schedule(const ModelSpec& spec, ParamVector w, const std::vector<ScheduledBatch>& schedule,
                                  double lr) {
  for (const auto& b : schedule) {
    if (b.data.empty()) continue;
    std::vector<std::size_t> all(b.data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    w = detail::sgd_step(spec, w, b.data, all, lr);
  }
  return w;
}

}  // namespace moefl
