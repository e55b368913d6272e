// SPDX-License-Identifier: Apache-2.0
//
// Dataset construction, client partitioning and the server's shared data.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "moefl/dataset.hpp"
#include "moefl/error.hpp"
#include "moefl/rng.hpp"

namespace moefl {

/// Gaussian blobs: one center per class drawn uniformly on the unit sphere,
/// isotropic noise of std `spread`. Features are clipped to [-10, 10] and
/// then mapped to [0,1] with one global min-max transform. Samples are stored
/// class-major.
inline Dataset gen_synthetic(std::size_t class_count, std::size_t dim, std::size_t per_class,
                             double spread, std::uint64_t seed) {
  if (class_count == 0 || dim == 0 || per_class == 0)
    throw InputError("gen_synthetic: class_count, dim and per_class must be >= 1");
  if (!(spread > 0.0) || !std::isfinite(spread)) throw InputError("gen_synthetic: spread must be > 0");

  Rng rng(derive_seed(seed, "gen_synthetic"));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centers(class_count * dim);
  for (std::size_t c = 0; c < class_count; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = normal(rng);
        centers[c * dim + d] = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] /= norm;
  }

  Dataset ds{dim, class_count, {}, {}};
  ds.features.reserve(class_count * per_class * dim);
  ds.labels.reserve(class_count * per_class);
  for (std::size_t c = 0; c < class_count; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = centers[c * dim + d] + spread * normal(rng);
        ds.features.push_back(std::clamp(v, -10.0, 10.0));
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }

  const auto [lo_it, hi_it] = std::minmax_element(ds.features.begin(), ds.features.end());
  const double lo = *lo_it, hi = *hi_it;
  const double range = hi - lo;
  for (double& v : ds.features) v = range > 0.0 ? (v - lo) / range : 0.0;
  return ds;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Moves the last `test_per_class` samples of every class into a test set.
inline TrainTestSplit holdout_per_class(const Dataset& ds, std::size_t test_per_class) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> train_idx, test_idx;
  for (const auto& idx : by_class) {
    if (idx.size() <= test_per_class)
      throw InputError("holdout_per_class: a class has no samples left for training");
    const std::size_t cut = idx.size() - test_per_class;
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  TrainTestSplit out{ds.subset(train_idx), ds.subset(test_idx)};
  out.train.class_count = out.test.class_count = ds.class_count;
  return out;
}

/// Random holdout of round(fraction * n) samples, for file datasets without a
/// separate test file.
inline TrainTestSplit holdout_fraction(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("holdout_fraction: fraction must be in (0,1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "holdout"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  TrainTestSplit out{ds.subset(train_idx), ds.subset(test_idx)};
  out.train.class_count = out.test.class_count = ds.class_count;
  return out;
}

struct ClientPartition {
  std::vector<std::vector<std::size_t>> client_indices;
  /// Shareable subset of each client's indices (empty until split_public).
  std::vector<std::vector<std::size_t>> public_indices;

  std::size_t client_count() const noexcept { return client_indices.size(); }
};

namespace detail {

inline void check_shard_args(const Dataset& ds, std::size_t n_clients, std::size_t shards) {
  if (n_clients == 0) throw InputError("partition: n_clients must be >= 1");
  if (shards == 0 || shards % n_clients != 0)
    throw InputError("partition: shards (" + std::to_string(shards) +
                     ") must be a positive multiple of n_clients (" + std::to_string(n_clients) + ")");
  if (shards > ds.size())
    throw InputError("partition: more shards (" + std::to_string(shards) + ") than samples (" +
                     std::to_string(ds.size()) + ")");
}

/// Cuts `order` into equal contiguous shards (dropping the remainder) and
/// deals shards to clients in a random shard order.
inline ClientPartition deal_shards(const std::vector<std::size_t>& order, std::size_t n_clients,
                                   std::size_t shards, Rng& rng) {
  const std::size_t shard_size = order.size() / shards;
  std::vector<std::size_t> shard_order(shards);
  std::iota(shard_order.begin(), shard_order.end(), std::size_t{0});
  std::shuffle(shard_order.begin(), shard_order.end(), rng);
  const std::size_t per_client = shards / n_clients;
  ClientPartition p;
  p.client_indices.resize(n_clients);
  p.public_indices.resize(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    auto& dst = p.client_indices[c];
    for (std::size_t k = 0; k < per_client; ++k) {
      const std::size_t s = shard_order[c * per_client + k];
      dst.insert(dst.end(), order.begin() + static_cast<std::ptrdiff_t>(s * shard_size),
                 order.begin() + static_cast<std::ptrdiff_t>((s + 1) * shard_size));
    }
  }
  return p;
}

}  // namespace detail

/// Shuffle, cut into shards, deal shards/n_clients shards per client.
inline ClientPartition partition_iid(const Dataset& ds, std::size_t n_clients, std::size_t shards,
                                     std::uint64_t seed) {
  detail::check_shard_args(ds, n_clients, shards);
  Rng rng(derive_seed(seed, "partition_iid"));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return detail::deal_shards(order, n_clients, shards, rng);
}

/// Sort by label (random order within a label), cut into contiguous shards,
/// deal shards at random. Each client ends up with few distinct labels.
inline ClientPartition partition_noniid(const Dataset& ds, std::size_t n_clients,
                                        std::size_t shards, std::uint64_t seed) {
  detail::check_shard_args(ds, n_clients, shards);
  Rng rng(derive_seed(seed, "partition_noniid"));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });
  return detail::deal_shards(order, n_clients, shards, rng);
}

/// ceil(fraction * n), tolerant of representation error in the product.
inline std::size_t public_share_count(std::size_t n, double fraction) {
  const double exact = fraction * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

/// Per client, marks ceil(fraction * |client|) uniformly chosen indices as
/// public. Public lists are kept in ascending index order.
inline ClientPartition split_public(ClientPartition p, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("split_public: fraction must be in (0,1)");
  p.public_indices.assign(p.client_count(), {});
  for (std::size_t c = 0; c < p.client_count(); ++c) {
    std::vector<std::size_t> pool = p.client_indices[c];
    Rng rng(derive_seed(seed, "split_public", c));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(public_share_count(pool.size(), fraction));
    std::sort(pool.begin(), pool.end());
    p.public_indices[c] = std::move(pool);
  }
  return p;
}

enum class Role { legitimate, attacker };
enum class Purity { pure, impure };

inline std::string to_string(Purity p) { return p == Purity::pure ? "pure" : "impure"; }

/// Applies an independent uniformly random permutation to the features of
/// every sample. Labels are unchanged.
inline Dataset shuffle_pixels(Dataset ds, Rng& rng) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    std::shuffle(r.begin(), r.end(), rng);
  }
  return ds;
}

struct ServerData {
  Dataset data;
  /// Contributing client for every sample of `data`.
  std::vector<std::size_t> source_client;
  Purity purity = Purity::pure;
};

/// D_0 from the clients' public samples. Pure keeps legitimate clients only;
/// impure keeps everyone, with attacker samples pixel-shuffled.
inline ServerData build_server_data(const Dataset& ds, const ClientPartition& p,
                                    const std::vector<Role>& roles, Purity purity, Rng& rng) {
  if (roles.size() != p.client_count()) throw InputError("build_server_data: roles/partition size mismatch");
  if (purity == Purity::pure &&
      std::none_of(roles.begin(), roles.end(), [](Role r) { return r == Role::legitimate; }))
    throw ConfigError("pure server data requires at least one legitimate client", "server.purity");

  ServerData out;
  out.purity = purity;
  out.data = Dataset{ds.dim, ds.class_count, {}, {}};
  for (std::size_t c = 0; c < p.client_count(); ++c) {
    const bool attacker = roles[c] == Role::attacker;
    if (attacker && purity == Purity::pure) continue;
    Dataset part = ds.subset(p.public_indices[c]);
    if (attacker) part = shuffle_pixels(std::move(part), rng);
    out.data.append(part);
    out.source_client.insert(out.source_client.end(), part.size(), c);
  }
  out.data.class_count = ds.class_count;
  return out;
}

}  // namespace moefl
