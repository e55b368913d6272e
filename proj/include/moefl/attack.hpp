// SPDX-License-Identifier: Apache-2.0
//
// Adversarial behaviors as pure transformations of a client's data or of the
// model it submits.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moefl/data.hpp"
#include "moefl/error.hpp"
#include "moefl/nn.hpp"
#include "moefl/rng.hpp"

namespace moefl {

enum class AttackKind {
  random_weights,
  additive_noise,
  negative_weight,
  label_flip_static,
  label_flip_adaptive,
  pixel_shuffle,
};

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::random_weights: return "random_weights";
    case AttackKind::additive_noise: return "additive_noise";
    case AttackKind::negative_weight: return "negative_weight";
    case AttackKind::label_flip_static: return "label_flip_static";
    case AttackKind::label_flip_adaptive: return "label_flip_adaptive";
    case AttackKind::pixel_shuffle: return "pixel_shuffle";
  }
  return "?";
}

inline std::optional<AttackKind> parse_attack_kind(std::string_view s) {
  for (AttackKind k : {AttackKind::random_weights, AttackKind::additive_noise, AttackKind::negative_weight,
                       AttackKind::label_flip_static, AttackKind::label_flip_adaptive,
                       AttackKind::pixel_shuffle})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// True for kinds that replace the submitted model rather than the data.
inline bool is_model_attack(AttackKind k) {
  return k == AttackKind::random_weights || k == AttackKind::additive_noise ||
         k == AttackKind::negative_weight;
}

struct AttackConfig {
  AttackKind kind = AttackKind::negative_weight;
  /// Standard deviation for random_weights / additive_noise.
  double noise_scale = 1.0;

  void validate() const {
    if (!std::isfinite(noise_scale) || noise_scale < 0.0)
      throw InputError("attack noise_scale must be finite and >= 0");
  }
};

/// Uniformly random permutation of [0, classes) with no fixed point
/// (rejection sampling). With one class the identity is the only option.
inline std::vector<int> random_derangement(std::size_t classes, Rng& rng) {
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  if (classes < 2) return perm;
  for (;;) {
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed = false;
    for (std::size_t i = 0; i < classes && !fixed; ++i) fixed = perm[i] == static_cast<int>(i);
    if (!fixed) return perm;
  }
}

/// Relabels every sample y -> map[y].
inline Dataset apply_label_map(Dataset ds, std::span<const int> map) {
  if (map.size() != ds.class_count) throw InputError("apply_label_map: map size != class_count");
  for (int& y : ds.labels) y = map[static_cast<std::size_t>(y)];
  return ds;
}

/// Stream that drives an attacker's data poisoning. Static flips are keyed to
/// round 0 so the same permutation is reused in every round; adaptive flips
/// and pixel shuffles draw fresh randomness per round.
inline Rng poisoning_stream(std::uint64_t master_seed, AttackKind kind, std::size_t client,
                            std::size_t round) {
  const std::size_t key_round = kind == AttackKind::label_flip_static ? 0 : round;
  return make_rng(master_seed, "poison", client, key_round);
}

inline Dataset poison_dataset(Dataset ds, AttackKind kind, Rng& rng) {
  switch (kind) {
    case AttackKind::label_flip_static:
    case AttackKind::label_flip_adaptive: {
      const std::vector<int> map = random_derangement(ds.class_count, rng);
      return apply_label_map(std::move(ds), map);
    }
    case AttackKind::pixel_shuffle:
      return shuffle_pixels(std::move(ds), rng);
    default:
      throw InputError("poison_dataset: " + to_string(kind) + " is not a data-poisoning attack");
  }
}

/// Model an attacker submits.
///   negative_weight: -broadcast
///   additive_noise:  honest + N(0, noise_scale^2) per coordinate
///   random_weights:  N(0, noise_scale^2) per coordinate
inline ParamVector forge_model(AttackKind kind, const ParamVector& honest, const ParamVector& broadcast,
                               double noise_scale, Rng& rng) {
  if (honest.size() != broadcast.size()) throw InputError("forge_model: vector length mismatch");
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) throw InputError("forge_model: bad noise_scale");
  ParamVector out(broadcast.size());
  switch (kind) {
    case AttackKind::negative_weight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = -broadcast[i];
      return out;
    case AttackKind::additive_noise: {
      if (noise_scale == 0.0) return honest;
      std::normal_distribution<double> noise(0.0, noise_scale);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = honest[i] + noise(rng);
      return out;
    }
    case AttackKind::random_weights: {
      if (noise_scale == 0.0) return out;
      std::normal_distribution<double> noise(0.0, noise_scale);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = noise(rng);
      return out;
    }
    default:
      throw InputError("forge_model: " + to_string(kind) + " is not a model-forging attack");
  }
}

}  // namespace moefl
