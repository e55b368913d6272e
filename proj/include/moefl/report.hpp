// SPDX-License-Identifier: Apache-2.0
//
// Run artifacts: per-round metrics CSV, round records and the run summary.
#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moefl/analysis.hpp"
#include "moefl/config.hpp"
#include "moefl/simulator.hpp"

namespace moefl {

inline constexpr const char* kMetricsHeader =
    "round,accuracy,weighted_loss,delta_w_norm,attacker_rho_mass,max_attacker_rho";

/// Shortest text that round-trips a double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<RoundRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const RoundRecord& r : records) {
    double mass = 0.0, max_rho = 0.0;
    for (std::size_t i = 0; i < r.rho.size(); ++i)
      if (r.is_attacker[i]) {
        mass += r.rho[i];
        max_rho = std::max(max_rho, r.rho[i]);
      }
    os << r.round << ',' << format_real(r.test_accuracy) << ',' << format_real(r.weighted_loss) << ','
       << format_real(r.delta_w_norm) << ',' << format_real(mass) << ',' << format_real(max_rho) << '\n';
  }
}

inline json record_to_json(const RoundRecord& r) {
  json j;
  j["round"] = r.round;
  j["cohort"] = r.cohort;
  j["rho"] = r.rho;
  j["is_attacker"] = r.is_attacker;
  j["client_losses"] = r.client_losses;
  j["distances"] = r.distances;
  j["snapshot_id"] = r.snapshot_id;
  j["test_accuracy"] = r.test_accuracy;
  j["weighted_loss"] = r.weighted_loss;
  j["delta_w_norm"] = r.delta_w_norm;
  j["bias"] = r.bias;
  j["zero_rho_count"] = r.zero_rho_count;
  j["aggregator"] = r.aggregator;
  j["last_layers"] = r.last_layers;
  return j;
}

inline RoundRecord record_from_json(const json& j) {
  try {
    RoundRecord r;
    r.round = j.at("round").get<std::size_t>();
    r.cohort = j.at("cohort").get<std::vector<std::size_t>>();
    r.rho = j.at("rho").get<std::vector<double>>();
    r.is_attacker = j.at("is_attacker").get<std::vector<bool>>();
    r.client_losses = j.at("client_losses").get<std::vector<double>>();
    r.distances = j.at("distances").get<std::vector<double>>();
    r.snapshot_id = j.at("snapshot_id").get<long>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.weighted_loss = j.at("weighted_loss").get<double>();
    r.delta_w_norm = j.at("delta_w_norm").get<double>();
    r.bias = j.at("bias").get<double>();
    r.zero_rho_count = j.at("zero_rho_count").get<std::size_t>();
    r.aggregator = j.at("aggregator").get<std::string>();
    r.last_layers = j.at("last_layers").get<std::vector<std::vector<double>>>();
    if (r.rho.size() != r.cohort.size() || r.is_attacker.size() != r.cohort.size())
      throw FormatError("round record " + std::to_string(r.round) + ": inconsistent cohort arrays");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed round record: ") + e.what());
  }
}

inline json lemma2_to_json(const BoundParams& p) {
  const Lemma2ImpureTerms t = lemma2_impure_terms(p);
  return {{"pure_threshold", lemma2_pure_threshold(p)},
          {"impure_threshold", t.total},
          {"impure_terms",
           {{"varsigma1", t.varsigma1},
            {"varsigma2", t.varsigma2},
            {"nu1", t.nu1},
            {"nu2", t.nu2},
            {"varsigma", t.varsigma},
            {"eta", t.eta},
            {"legitimate_term", t.legitimate_term},
            {"attacker_term", t.attacker_term}}},
          {"bias_bound",
           {{"noniid_clean", bias_bound(p, BiasScenario::noniid_clean)},
            {"impure", bias_bound(p, BiasScenario::impure)},
            {"pure", bias_bound(p, BiasScenario::pure)}}}};
}

inline json rho_report_to_json(const RhoReport& rep) {
  json rounds = json::array();
  for (const auto& s : rep.rounds)
    rounds.push_back({{"round", s.round},
                      {"attacker_mass", s.attacker_mass},
                      {"legitimate_mass", s.legitimate_mass},
                      {"max_attacker_rho", s.max_attacker_rho},
                      {"attackers_in_cohort", s.attackers_in_cohort},
                      {"zero_rho_count", s.zero_rho_count}});
  return {{"cumulative_attacker_mass", rep.cumulative_attacker_mass},
          {"cumulative_legitimate_mass", rep.cumulative_legitimate_mass},
          {"max_attacker_rho", rep.max_attacker_rho},
          {"bucket_upper_edges", kRhoBucketEdges},
          {"attacker_histogram", rep.attacker_histogram},
          {"legitimate_histogram", rep.legitimate_histogram},
          {"rounds", rounds}};
}

/// PCA of the cohort's last-layer parameters at every snapshot round.
inline json pca_to_json(const std::vector<RoundRecord>& records) {
  json out = json::array();
  for (const RoundRecord& r : records) {
    if (r.snapshot_id < 0 || r.last_layers.size() < 2) continue;
    const Pca2Result p = pca2(r.last_layers);
    json proj = json::array();
    for (std::size_t i = 0; i < r.cohort.size(); ++i)
      proj.push_back({{"client", r.cohort[i]},
                      {"attacker", static_cast<bool>(r.is_attacker[i])},
                      {"x", p.projections[i][0]},
                      {"y", p.projections[i][1]}});
    out.push_back({{"round", r.round}, {"explained_variance", p.explained_variance}, {"projections", proj}});
  }
  return out;
}

}  // namespace moefl
