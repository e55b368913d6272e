// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moefl/error.hpp"

namespace moefl {

/// Labeled samples with features stored row-major (samples x dim).
/// Features are expected in [0,1]; labels in [0, class_count).
struct Dataset {
  std::size_t dim = 0;
  std::size_t class_count = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * dim, dim};
  }
  std::span<double> row(std::size_t i) noexcept { return {features.data() + i * dim, dim}; }

  void push_back(std::span<const double> x, int label) {
    if (x.size() != dim) throw InputError("Dataset::push_back: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{dim, class_count, {}, {}};
    out.features.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= size()) throw InputError("Dataset::subset: index out of range");
      out.push_back(row(i), labels[i]);
    }
    return out;
  }

  /// Appends all samples of `other`; dimensions must agree.
  void append(const Dataset& other) {
    if (other.empty()) return;
    if (empty() && dim == 0) {
      dim = other.dim;
      class_count = other.class_count;
    }
    if (other.dim != dim) throw InputError("Dataset::append: feature dimension mismatch");
    features.insert(features.end(), other.features.begin(), other.features.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    class_count = std::max(class_count, other.class_count);
  }

  /// Throws InputError unless the documented invariants hold.
  void validate() const {
    if (empty()) throw InputError("dataset is empty");
    if (features.size() != labels.size() * dim) throw InputError("dataset feature storage size mismatch");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_count)
        throw InputError("dataset label " + std::to_string(y) + " outside [0, class_count)");
    for (double v : features)
      if (!std::isfinite(v)) throw InputError("dataset contains a non-finite feature");
  }

  bool operator==(const Dataset&) const = default;
};

}  // namespace moefl
