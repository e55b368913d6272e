// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "moefl/aggregation.hpp"
#include "moefl/dataset.hpp"
#include "moefl/nn.hpp"

namespace moefl {

/// Fraction of argmax-correct predictions.
inline double accuracy(const ModelSpec& spec, const ParamVector& w, const Dataset& test) {
  if (test.empty()) throw InputError("accuracy: empty test set");
  const std::vector<int> pred = predict(spec, w, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// sum_n rho_n loss_n
inline double weighted_train_loss(const SimplexWeights& rho, std::span<const double> losses) {
  if (rho.size() != losses.size())
    throw ContractError("weighted_train_loss: " + std::to_string(rho.size()) + " weights for " +
                        std::to_string(losses.size()) + " losses");
  double s = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) s += rho[i] * losses[i];
  return s;
}

}  // namespace moefl
