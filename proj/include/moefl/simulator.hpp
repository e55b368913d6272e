// SPDX-License-Identifier: Apache-2.0
//
// Round loop of mixture-of-experts federated learning.
//
// Step 0 builds the data, partitions it across the population, assembles the
// server dataset D0 from the public shares (optionally curated) and
// broadcasts the initial model. Every round then
//   1. samples a cohort uniformly without replacement,
//   2. runs each cohort member's local update (legitimate training, poisoned
//      training, or a forged model) in parallel,
//   3. trains the server model w0 on D0,
//   4. weights the cohort models against w0 and averages them into w^t,
// and stops once ||w^{t-1} - w^t|| <= zeta or after max_rounds.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "moefl/aggregation.hpp"
#include "moefl/attack.hpp"
#include "moefl/data.hpp"
#include "moefl/error.hpp"
#include "moefl/idx.hpp"
#include "moefl/metrics.hpp"
#include "moefl/nn.hpp"
#include "moefl/parallel.hpp"
#include "moefl/rng.hpp"
#include "moefl/server_trust.hpp"

namespace moefl {

enum class DataSource { synthetic, idx };
enum class PartitionMode { iid, noniid };
enum class LocalUpdate { sgd, esgd };
enum class Curation { none, online, stochastic, sorted };

struct ExperimentConfig {
  struct Model {
    std::vector<std::size_t> hidden{32};
    Activation activation = Activation::relu;
  } model;

  struct Data {
    DataSource source = DataSource::synthetic;
    std::size_t classes = 10;
    std::size_t dim = 64;
    std::size_t per_class = 120;
    std::size_t test_per_class = 40;
    double spread = 0.15;
    std::string images, labels, test_images, test_labels;
    double test_fraction = 0.2;
    PartitionMode partition = PartitionMode::iid;
    std::size_t shards = 40;
    double public_fraction = 0.15;
  } data;

  struct Clients {
    std::size_t population = 20;
    std::size_t cohort = 6;
    std::size_t local_epochs = 2;
    std::size_t batch_size = 20;
    double lr = 0.1;
    LocalUpdate local_update = LocalUpdate::sgd;
    double esgd_alpha = 0.1;
    double esgd_beta = 0.1;
    bool esgd_server = true;
  } clients;

  struct Attackers {
    std::size_t count = 0;
    /// Explicit attacker ids; drawn from the master seed when empty.
    std::vector<std::size_t> ids;
    AttackConfig attack;
  } attackers;

  AggregatorKind aggregator;

  struct Server {
    Purity purity = Purity::pure;
    Curation curation = Curation::none;
    std::optional<double> d0;
    std::size_t trusted_clients = 0;
    std::size_t epochs_per_round = 1;
    std::optional<double> lr;
    bool warm_start = false;
    std::size_t pretrain_epochs = 0;
    /// Re-run curation every this many rounds; 0 runs it once at Step 0.
    std::size_t curation_every = 0;
    std::size_t stochastic_iters = 100;
    std::size_t stochastic_sample = 20;
  } server;

  struct Run {
    std::size_t max_rounds = 150;
    double zeta = 0.01;
    std::uint64_t master_seed = 1;
    /// Record last-layer snapshots every this many rounds (and round 1); 0 disables.
    std::size_t snapshot_every = 0;
  } run;

  double server_lr() const { return server.lr.value_or(clients.lr); }

  ModelSpec model_spec(std::size_t input_dim, std::size_t classes) const {
    return ModelSpec::dense(input_dim, model.hidden, classes, model.activation);
  }

  /// Throws ConfigError naming the offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg, field); };
    for (std::size_t h : model.hidden)
      if (h == 0) fail("model.hidden", "layer widths must be positive");
    if (data.source == DataSource::synthetic) {
      if (data.classes < 2) fail("data.classes", "must be >= 2");
      if (data.dim == 0) fail("data.dim", "must be >= 1");
      if (data.per_class == 0) fail("data.per_class", "must be >= 1");
      if (data.test_per_class == 0) fail("data.test_per_class", "must be >= 1");
      if (!(data.spread > 0.0)) fail("data.spread", "must be > 0");
    } else {
      if (data.images.empty()) fail("data.images", "required for idx source");
      if (data.labels.empty()) fail("data.labels", "required for idx source");
      if (data.test_images.empty() != data.test_labels.empty())
        fail("data.test_images", "test_images and test_labels must be given together");
      if (data.test_images.empty() && !(data.test_fraction > 0.0 && data.test_fraction < 1.0))
        fail("data.test_fraction", "must be in (0,1)");
    }
    if (!(data.public_fraction > 0.0 && data.public_fraction < 1.0))
      fail("data.public_fraction", "must be in (0,1)");
    if (clients.population == 0) fail("clients.population", "must be >= 1");
    if (clients.cohort == 0) fail("clients.cohort", "cohort must contain at least one client");
    if (clients.cohort > clients.population) fail("clients.cohort", "must not exceed population");
    if (data.shards == 0 || data.shards % clients.population != 0)
      fail("data.shards", "must be a positive multiple of clients.population");
    if (clients.batch_size == 0) fail("clients.batch_size", "must be >= 1");
    if (!(clients.lr > 0.0) || !std::isfinite(clients.lr)) fail("clients.lr", "must be > 0");
    if (!(clients.esgd_alpha >= 0.0 && clients.esgd_alpha <= 1.0)) fail("clients.esgd_alpha", "must be in [0,1]");
    if (!(clients.esgd_beta >= 0.0 && clients.esgd_beta <= 1.0)) fail("clients.esgd_beta", "must be in [0,1]");
    if (attackers.count > clients.population) fail("attackers.count", "must not exceed population");
    if (!attackers.ids.empty()) {
      if (attackers.ids.size() != attackers.count) fail("attackers.ids", "length must equal attackers.count");
      std::vector<std::size_t> s = attackers.ids;
      std::sort(s.begin(), s.end());
      if (std::adjacent_find(s.begin(), s.end()) != s.end()) fail("attackers.ids", "duplicate id");
      if (!s.empty() && s.back() >= clients.population) fail("attackers.ids", "id outside population");
    }
    if (!std::isfinite(attackers.attack.noise_scale) || attackers.attack.noise_scale < 0.0)
      fail("attackers.noise_scale", "must be finite and >= 0");
    if (aggregator.tau && !(*aggregator.tau > 0.0)) fail("aggregator.tau", "must be > 0");
    if (!(aggregator.tie_tol >= 0.0)) fail("aggregator.tie_tol", "must be >= 0");
    if (server.purity == Purity::pure && attackers.count == clients.population)
      fail("server.purity", "pure server data requires at least one legitimate client");
    if (server.d0 && !(*server.d0 > 0.0)) fail("server.d0", "must be > 0");
    if (server.lr && !(*server.lr > 0.0)) fail("server.lr", "must be > 0");
    if (server.curation != Curation::none && server.curation != Curation::sorted && server.trusted_clients == 0)
      fail("server.trusted_clients", "online/stochastic curation needs at least one trusted client");
    if (server.trusted_clients > clients.population - attackers.count)
      fail("server.trusted_clients", "cannot exceed the number of legitimate clients");
    if (server.stochastic_iters == 0) fail("server.stochastic_iters", "must be >= 1");
    if (server.stochastic_sample == 0) fail("server.stochastic_sample", "must be >= 1");
    if (run.max_rounds == 0) fail("run.max_rounds", "must be >= 1");
    if (!(run.zeta > 0.0)) fail("run.zeta", "must be > 0");
  }
};

/// Uniform sample of k distinct ids from [0, population), ascending.
inline std::vector<std::size_t> sample_cohort(std::size_t population, std::size_t k, Rng& rng) {
  if (k > population)
    throw InputError("sample_cohort: k (" + std::to_string(k) + ") exceeds population (" +
                     std::to_string(population) + ")");
  std::vector<std::size_t> ids(population);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Random permutation of [0, n).
inline std::vector<std::size_t> draw_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> cohort;
  std::vector<double> rho;
  std::vector<bool> is_attacker;
  /// Loss of each submitted model on the data its client trained on.
  std::vector<double> client_losses;
  /// ||w_n - w0|| for each cohort member.
  std::vector<double> distances;
  /// Round index when a snapshot was taken, otherwise -1.
  long snapshot_id = -1;
  double test_accuracy = 0.0;
  double weighted_loss = 0.0;
  double delta_w_norm = 0.0;
  /// ||sum rho_n w_n - w0||
  double bias = 0.0;
  /// Cohort members with rho exactly 0.
  std::size_t zero_rho_count = 0;
  std::string aggregator;
  /// Output-layer parameters of each cohort model (snapshot rounds only).
  std::vector<std::vector<double>> last_layers;
};

/// Everything a test or tool may want to inspect about one round.
struct RoundTrace {
  std::size_t round = 0;
  const std::vector<std::size_t>& cohort;
  const std::vector<ParamVector>& models;
  const ParamVector& server_model;
  const ParamVector& previous_global;
  const ParamVector& global;
  const SimplexWeights& rho;
};

using RoundObserver = std::function<void(const RoundTrace&)>;

struct RunOptions {
  /// 0 selects default_thread_count().
  std::size_t threads = 0;
  RoundObserver observer;
};

struct SimulationState {
  ModelSpec spec;
  Dataset train;
  Dataset test;
  ClientPartition partition;
  std::vector<Role> roles;
  std::vector<std::size_t> attacker_ids;
  std::vector<std::size_t> trusted_ids;
  std::vector<Dataset> client_data;
  /// D0 as assembled from the public shares, before curation.
  ServerData server_data;
  ServerState server;
  /// Sorted curation: untrusted then trusted portions of D0.
  Dataset sorted_untrusted, sorted_trusted;
  ParamVector global;
  std::vector<std::optional<ParamVector>> anchors;
  std::optional<ParamVector> server_anchor;
  std::vector<CurationDecision> curation_log;
};

namespace detail {

inline TrainTestSplit load_data(const ExperimentConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.run.master_seed, "data");
  if (cfg.data.source == DataSource::synthetic) {
    const Dataset all = gen_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.per_class + cfg.data.test_per_class,
                                      cfg.data.spread, seed);
    return holdout_per_class(all, cfg.data.test_per_class);
  }
  Dataset train = load_idx(cfg.data.images, cfg.data.labels);
  if (!cfg.data.test_images.empty()) {
    Dataset test = load_idx(cfg.data.test_images, cfg.data.test_labels);
    if (test.dim != train.dim) throw ConfigError("test images dimension differs from training images", "data.test_images");
    const std::size_t classes = std::max(train.class_count, test.class_count);
    train.class_count = test.class_count = classes;
    return {std::move(train), std::move(test)};
  }
  return holdout_fraction(train, cfg.data.test_fraction, seed);
}

inline Dataset gather_clients(const ServerData& sd, const std::vector<std::size_t>& clients, bool include) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < sd.source_client.size(); ++i) {
    const bool member = std::binary_search(clients.begin(), clients.end(), sd.source_client[i]);
    if (member == include) idx.push_back(i);
  }
  Dataset out = sd.data.subset(idx);
  out.class_count = sd.data.class_count;
  return out;
}

/// Runs (or re-runs) the configured curation of D0.
inline void apply_curation(SimulationState& st, const ExperimentConfig& cfg, std::size_t round) {
  const std::uint64_t master = cfg.run.master_seed;
  const TrainParams init{cfg.server.pretrain_epochs, cfg.server_lr(), cfg.clients.batch_size};
  switch (cfg.server.curation) {
    case Curation::none: {
      st.server.curated = st.server_data.data;
      if (round == 0 && init.epochs > 0) {
        Rng rng = make_rng(master, "server_pretrain");
        st.server = train_server(std::move(st.server), st.spec, init, rng);
      }
      return;
    }
    case Curation::sorted: {
      st.sorted_trusted = gather_clients(st.server_data, st.trusted_ids, true);
      st.sorted_untrusted = gather_clients(st.server_data, st.trusted_ids, false);
      st.server.curated = st.sorted_untrusted;
      st.server.curated.append(st.sorted_trusted);
      if (st.server.curated.empty()) throw ConfigError("server dataset D0 is empty", "server");
      return;
    }
    case Curation::online: {
      Dataset trusted = gather_clients(st.server_data, st.trusted_ids, true);
      if (trusted.empty()) throw ConfigError("trusted clients share no data", "server.trusted_clients");
      std::vector<CandidateData> candidates;
      for (std::size_t c = 0; c < st.roles.size(); ++c) {
        if (std::binary_search(st.trusted_ids.begin(), st.trusted_ids.end(), c)) continue;
        if (st.server.is_outlier(c)) continue;
        Dataset part = gather_clients(st.server_data, {c}, true);
        if (!part.empty()) candidates.push_back({c, std::move(part)});
      }
      double d0 = cfg.server.d0.value_or(st.server.d0);
      if (d0 <= 0.0) {
        Rng cal = make_rng(master, "calibrate_d0", round);
        d0 = calibrate_d0_epochs(st.spec, st.server.w0, trusted, init.lr, init.batch_size, cal);
      }
      Rng rng = make_rng(master, "curate_online", round);
      CurationOutcome out = curate_online(std::move(st.server), st.spec, trusted, candidates, d0, init, rng);
      st.server = std::move(out.state);
      st.curation_log.insert(st.curation_log.end(), out.decisions.begin(), out.decisions.end());
      return;
    }
    case Curation::stochastic: {
      Dataset trusted = gather_clients(st.server_data, st.trusted_ids, true);
      if (trusted.empty()) throw ConfigError("trusted clients share no data", "server.trusted_clients");
      Dataset pool = gather_clients(st.server_data, st.trusted_ids, false);
      st.server.curated = trusted;
      if (init.epochs > 0) {
        Rng pre = make_rng(master, "server_pretrain", round);
        st.server = train_server(std::move(st.server), st.spec, init, pre);
      }
      if (pool.empty()) return;
      double d0 = cfg.server.d0.value_or(st.server.d0);
      if (d0 <= 0.0) {
        Rng cal = make_rng(master, "calibrate_d0", round);
        d0 = calibrate_d0_steps(st.spec, st.server.w0, trusted, cfg.server.stochastic_sample, init.lr, cal);
      }
      Rng rng = make_rng(master, "curate_stochastic", round);
      CurationOutcome out = curate_stochastic(std::move(st.server), st.spec, pool, d0, cfg.server.stochastic_iters,
                                              cfg.server.stochastic_sample, init.lr, rng);
      st.server = std::move(out.state);
      st.curation_log.insert(st.curation_log.end(), out.decisions.begin(), out.decisions.end());
      return;
    }
  }
}

struct Submission {
  ParamVector model;
  double loss = 0.0;
  std::optional<ParamVector> anchor;
};

inline Submission client_update(const SimulationState& st, const ExperimentConfig& cfg, std::size_t client,
                                std::size_t round) {
  const std::uint64_t master = cfg.run.master_seed;
  const auto& cl = cfg.clients;
  Rng rng = make_rng(master, "client", client, round);
  const Dataset& own = st.client_data[client];
  const bool attacker = st.roles[client] == Role::attacker;
  const AttackKind kind = cfg.attackers.attack.kind;

  auto train_on = [&](const Dataset& data) -> Submission {
    if (cl.local_update == LocalUpdate::esgd) {
      ElasticState es{st.global, st.anchors[client].value_or(st.global)};
      es = train_local_esgd(st.spec, std::move(es), st.global, data, cl.local_epochs, cl.lr, cl.batch_size,
                            cl.esgd_alpha, cl.esgd_beta, rng);
      return {std::move(es.w), 0.0, std::move(es.anchor)};
    }
    return {train_local(st.spec, st.global, data, cl.local_epochs, cl.lr, cl.batch_size, rng), 0.0, std::nullopt};
  };

  Submission sub;
  if (!attacker) {
    sub = train_on(own);
    sub.loss = mean_loss(st.spec, sub.model, own);
    return sub;
  }
  if (is_model_attack(kind)) {
    ParamVector honest = kind == AttackKind::additive_noise ? train_on(own).model : st.global;
    Rng forge_rng = make_rng(master, "forge", client, round);
    sub.model = forge_model(kind, honest, st.global, cfg.attackers.attack.noise_scale, forge_rng);
    sub.loss = mean_loss(st.spec, sub.model, own);
    return sub;
  }
  Rng poison_rng = poisoning_stream(master, kind, client, round);
  const Dataset poisoned = poison_dataset(own, kind, poison_rng);
  sub = train_on(poisoned);
  sub.loss = mean_loss(st.spec, sub.model, poisoned);
  return sub;
}

inline void train_server_round(SimulationState& st, const ExperimentConfig& cfg, std::size_t round) {
  if (cfg.server.warm_start) st.server.w0 = st.global;
  if (cfg.server.epochs_per_round == 0) return;
  Rng rng = make_rng(cfg.run.master_seed, "server", round);
  const double lr = cfg.server_lr();
  const std::size_t bs = cfg.clients.batch_size;

  if (cfg.server.curation == Curation::sorted) {
    for (std::size_t e = 0; e < cfg.server.epochs_per_round; ++e) {
      Dataset u = st.sorted_untrusted, t = st.sorted_trusted;
      if (!u.empty()) u = u.subset(draw_order(u.size(), rng));
      if (!t.empty()) t = t.subset(draw_order(t.size(), rng));
      st.server.w0 = train_schedule(st.spec, std::move(st.server.w0),
                                    order_sorted(make_batches(u, bs), make_batches(t, bs)), lr);
    }
    return;
  }
  if (cfg.clients.local_update == LocalUpdate::esgd && cfg.clients.esgd_server) {
    ElasticState es{st.server.w0, st.server_anchor.value_or(st.server.w0)};
    es = train_local_esgd(st.spec, std::move(es), st.global, st.server.curated, cfg.server.epochs_per_round, lr, bs,
                          cfg.clients.esgd_alpha, cfg.clients.esgd_beta, rng);
    st.server.w0 = std::move(es.w);
    st.server_anchor = std::move(es.anchor);
    return;
  }
  st.server = train_server(std::move(st.server), st.spec, {cfg.server.epochs_per_round, lr, bs}, rng);
}

}  // namespace detail

/// Step 0: data, partition, roles, D0, curation, initial broadcast.
inline SimulationState initialize(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t master = cfg.run.master_seed;
  SimulationState st;

  auto [train, test] = detail::load_data(cfg);
  st.train = std::move(train);
  st.test = std::move(test);
  st.spec = cfg.model_spec(st.train.dim, st.train.class_count);

  const std::size_t population = cfg.clients.population;
  if (cfg.data.shards > st.train.size())
    throw ConfigError("data.shards: more shards than training samples", "data.shards");
  st.partition = cfg.data.partition == PartitionMode::iid
                     ? partition_iid(st.train, population, cfg.data.shards, derive_seed(master, "partition"))
                     : partition_noniid(st.train, population, cfg.data.shards, derive_seed(master, "partition"));
  st.partition = split_public(std::move(st.partition), cfg.data.public_fraction, derive_seed(master, "public"));

  if (!cfg.attackers.ids.empty()) {
    st.attacker_ids = cfg.attackers.ids;
  } else {
    Rng rng = make_rng(master, "attackers");
    st.attacker_ids = sample_cohort(population, cfg.attackers.count, rng);
  }
  std::sort(st.attacker_ids.begin(), st.attacker_ids.end());
  st.roles.assign(population, Role::legitimate);
  for (std::size_t a : st.attacker_ids) st.roles[a] = Role::attacker;
  for (std::size_t c = 0; c < population && st.trusted_ids.size() < cfg.server.trusted_clients; ++c)
    if (st.roles[c] == Role::legitimate) st.trusted_ids.push_back(c);

  st.client_data.reserve(population);
  for (std::size_t c = 0; c < population; ++c) {
    st.client_data.push_back(st.train.subset(st.partition.client_indices[c]));
    st.client_data.back().class_count = st.train.class_count;
  }

  Rng sd_rng = make_rng(master, "server_data");
  st.server_data = build_server_data(st.train, st.partition, st.roles, cfg.server.purity, sd_rng);

  st.global = init_model(st.spec, derive_seed(master, "init"));
  st.server.w0 = st.global;
  st.server.outlier.assign(population, false);
  if (cfg.server.d0) st.server.d0 = *cfg.server.d0;
  st.anchors.assign(population, std::nullopt);

  detail::apply_curation(st, cfg, 0);
  if (st.server.curated.empty()) throw ConfigError("server dataset D0 is empty", "server");
  return st;
}

/// One protocol round; `round` is 1-based.
inline RoundRecord run_round(SimulationState& st, const ExperimentConfig& cfg, std::size_t round,
                             const RunOptions& opts = {}) {
  const std::uint64_t master = cfg.run.master_seed;
  if (cfg.server.curation_every > 0 && round > 1 && (round - 1) % cfg.server.curation_every == 0 &&
      cfg.server.curation != Curation::none && cfg.server.curation != Curation::sorted)
    detail::apply_curation(st, cfg, round);

  Rng cohort_rng = make_rng(master, "cohort", round);
  const std::vector<std::size_t> cohort = sample_cohort(cfg.clients.population, cfg.clients.cohort, cohort_rng);
  if (cohort.empty()) throw ConfigError("cohort contains zero clients", "clients.cohort");

  std::vector<detail::Submission> subs(cohort.size());
  const std::size_t threads = opts.threads == 0 ? default_thread_count() : opts.threads;
  parallel_for(cohort.size(), threads,
               [&](std::size_t i) { subs[i] = detail::client_update(st, cfg, cohort[i], round); });

  detail::train_server_round(st, cfg, round);

  std::vector<ParamVector> models;
  models.reserve(subs.size());
  for (auto& s : subs) models.push_back(std::move(s.model));
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (subs[i].anchor) st.anchors[cohort[i]] = std::move(subs[i].anchor);

  const SimplexWeights rho = compute_weights(cfg.aggregator, st.server.w0, models);
  ParamVector next = aggregate(rho, models);

  RoundRecord rec;
  rec.round = round;
  rec.cohort = cohort;
  rec.rho = rho.values();
  rec.aggregator = cfg.aggregator.name();
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    rec.is_attacker.push_back(st.roles[cohort[i]] == Role::attacker);
    rec.client_losses.push_back(subs[i].loss);
    rec.distances.push_back(param_dist(models[i], st.server.w0));
    rec.zero_rho_count += rho[i] == 0.0 ? 1 : 0;
  }
  rec.weighted_loss = weighted_train_loss(rho, rec.client_losses);
  rec.delta_w_norm = param_dist(st.global, next);
  rec.bias = param_dist(next, st.server.w0);
  rec.test_accuracy = accuracy(st.spec, next, st.test);
  const std::size_t every = cfg.run.snapshot_every;
  if (every > 0 && (round == 1 || round % every == 0)) {
    rec.snapshot_id = static_cast<long>(round);
    for (const auto& m : models) rec.last_layers.push_back(last_layer_slice(st.spec, m));
  }

  if (opts.observer) opts.observer(RoundTrace{round, cohort, models, st.server.w0, st.global, next, rho});
  st.global = std::move(next);
  return rec;
}

struct RunResult {
  std::vector<RoundRecord> records;
  ParamVector final_model;
  /// "converged" or "max_rounds"
  std::string stop_reason;
  ModelSpec spec;
  std::vector<std::size_t> attacker_ids;
  std::vector<std::size_t> trusted_ids;
  double d0 = 0.0;
  std::size_t server_data_size = 0;
  std::size_t curated_size = 0;
  std::vector<std::size_t> outlier_clients;
  std::vector<CurationDecision> curation_log;
  /// Global model at each snapshot round.
  std::map<std::size_t, ParamVector> snapshots;
};

inline RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  SimulationState st = initialize(cfg);
  RunResult out;
  out.spec = st.spec;
  out.attacker_ids = st.attacker_ids;
  out.trusted_ids = st.trusted_ids;
  out.server_data_size = st.server_data.data.size();
  out.stop_reason = "max_rounds";
  for (std::size_t t = 1; t <= cfg.run.max_rounds; ++t) {
    RoundRecord rec = run_round(st, cfg, t, opts);
    const bool converged = rec.delta_w_norm <= cfg.run.zeta;
    if (rec.snapshot_id >= 0) out.snapshots.emplace(t, st.global);
    out.records.push_back(std::move(rec));
    if (converged) {
      out.stop_reason = "converged";
      break;
    }
  }
  out.final_model = st.global;
  out.d0 = st.server.d0;
  out.curated_size = st.server.curated.size();
  for (std::size_t c = 0; c < st.server.outlier.size(); ++c)
    if (st.server.outlier[c]) out.outlier_clients.push_back(c);
  out.curation_log = std::move(st.curation_log);
  return out;
}

}  // namespace moefl
