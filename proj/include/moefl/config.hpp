// SPDX-License-Identifier: Apache-2.0
//
// JSON experiment configuration: parsing with field-level errors and a
// canonical echo that parses back to the same configuration.
#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moefl/analysis.hpp"
#include "moefl/error.hpp"
#include "moefl/simulator.hpp"

namespace moefl {

using json = nlohmann::json;

struct AnalysisOptions {
  /// User-supplied constants for the threshold and bias calculators.
  std::optional<BoundParams> bounds;
  /// Estimate the constants from the final model when none are given.
  bool estimate_bounds = true;
};

struct ParsedConfig {
  ExperimentConfig experiment;
  AnalysisOptions analysis;
};

namespace detail {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  static void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg, field);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& at(const std::string& key) const { return j_.at(key); }

  void only(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!allowed.count(it.key())) fail(field(it.key()), "unknown key");
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!has(key)) return;
    out = convert<T>(key);
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) const {
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    out = convert<T>(key);
  }

  template <class T>
  T convert(const std::string& key) const {
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(field(key), "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(field(key), "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(field(key), "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        fail(field(key), "expected a nonnegative integer");
      return static_cast<T>(v.get<unsigned long long>());
    } else {
      if (!v.is_array()) fail(field(key), "expected an array");
      T out;
      for (const json& e : v) {
        if (!e.is_number_unsigned()) fail(field(key), "expected nonnegative integers");
        out.push_back(e.get<typename T::value_type>());
      }
      return out;
    }
  }

  template <class E>
  void get_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> names) const {
    if (!has(key)) return;
    const std::string s = convert<std::string>(key);
    for (const auto& [name, value] : names)
      if (s == name) {
        out = value;
        return;
      }
    std::string options;
    for (const auto& [name, value] : names) options += (options.empty() ? "" : "|") + std::string(name);
    fail(field(key), "unknown value '" + s + "' (expected " + options + ")");
  }

 private:
  const json& j_;
  std::string path_;
};

inline std::optional<Section> section(const json& root, const std::string& key) {
  if (!root.contains(key) || root.at(key).is_null()) return std::nullopt;
  return Section(root.at(key), key);
}

inline BoundParams parse_bounds(const Section& s) {
  s.only({"L1", "L2", "sigma1", "sigma2", "eta1", "eta2", "eta", "B", "R", "K", "N", "E"});
  BoundParams p;
  s.get("L1", p.L1);
  s.get("L2", p.L2);
  s.get("sigma1", p.sigma1);
  s.get("sigma2", p.sigma2);
  s.get("eta1", p.eta1);
  s.get("eta2", p.eta2);
  s.get("eta", p.eta);
  s.get("B", p.B);
  s.get("R", p.R);
  s.get("K", p.K);
  s.get("N", p.N);
  s.get("E", p.E);
  try {
    p.validate();
  } catch (const InputError& e) {
    Section::fail(s.field(""), e.what());
  }
  return p;
}

}  // namespace detail

/// Parses and validates a configuration document. Every section except
/// `aggregator` is optional; unknown keys are rejected.
inline ParsedConfig parse_config(const json& root) {
  using detail::Section;
  if (!root.is_object()) Section::fail("<root>", "configuration must be a JSON object");
  Section top(root, "");
  top.only({"model", "data", "clients", "attackers", "aggregator", "server", "run", "analysis"});

  ParsedConfig out;
  ExperimentConfig& c = out.experiment;

  if (auto s = detail::section(root, "model")) {
    s->only({"hidden", "activation"});
    s->get("hidden", c.model.hidden);
    s->get_enum("activation", c.model.activation, {{"relu", Activation::relu}, {"tanh", Activation::tanh}});
  }
  if (auto s = detail::section(root, "data")) {
    s->only({"source", "classes", "dim", "per_class", "test_per_class", "spread", "images", "labels", "test_images",
             "test_labels", "test_fraction", "partition", "shards", "public_fraction"});
    s->get_enum("source", c.data.source, {{"synthetic", DataSource::synthetic}, {"idx", DataSource::idx}});
    s->get("classes", c.data.classes);
    s->get("dim", c.data.dim);
    s->get("per_class", c.data.per_class);
    s->get("test_per_class", c.data.test_per_class);
    s->get("spread", c.data.spread);
    s->get("images", c.data.images);
    s->get("labels", c.data.labels);
    s->get("test_images", c.data.test_images);
    s->get("test_labels", c.data.test_labels);
    s->get("test_fraction", c.data.test_fraction);
    s->get_enum("partition", c.data.partition, {{"iid", PartitionMode::iid}, {"noniid", PartitionMode::noniid}});
    s->get("shards", c.data.shards);
    s->get("public_fraction", c.data.public_fraction);
  }
  if (auto s = detail::section(root, "clients")) {
    s->only({"population", "cohort", "local_epochs", "batch_size", "lr", "local_update", "esgd_alpha", "esgd_beta",
             "esgd_server"});
    s->get("population", c.clients.population);
    s->get("cohort", c.clients.cohort);
    s->get("local_epochs", c.clients.local_epochs);
    s->get("batch_size", c.clients.batch_size);
    s->get("lr", c.clients.lr);
    s->get_enum("local_update", c.clients.local_update, {{"sgd", LocalUpdate::sgd}, {"esgd", LocalUpdate::esgd}});
    s->get("esgd_alpha", c.clients.esgd_alpha);
    s->get("esgd_beta", c.clients.esgd_beta);
    s->get("esgd_server", c.clients.esgd_server);
  }
  if (auto s = detail::section(root, "attackers")) {
    s->only({"count", "ids", "kind", "noise_scale"});
    s->get("count", c.attackers.count);
    s->get("ids", c.attackers.ids);
    if (s->has("kind")) {
      const std::string k = s->convert<std::string>("kind");
      const auto kind = parse_attack_kind(k);
      if (!kind) Section::fail("attackers.kind", "unknown attack '" + k + "'");
      c.attackers.attack.kind = *kind;
    }
    s->get("noise_scale", c.attackers.attack.noise_scale);
  }
  {
    if (!root.contains("aggregator") || root.at("aggregator").is_null())
      Section::fail("aggregator", "required key is missing");
    Section s(root.at("aggregator"), "aggregator");
    s.only({"kind", "utility", "tau", "tie_tol"});
    if (!s.has("kind")) Section::fail("aggregator.kind", "required key is missing");
    s.get_enum("kind", c.aggregator.method,
               {{"fedavg", AggregatorMethod::fedavg},
                {"softmax", AggregatorMethod::softmax},
                {"opt_exact", AggregatorMethod::opt_exact},
                {"opt_entropic", AggregatorMethod::opt_entropic},
                {"utility", AggregatorMethod::utility}});
    s.get_enum("utility", c.aggregator.utility,
               {{"linear", UtilityKind::linear}, {"log", UtilityKind::log}, {"exp", UtilityKind::exp}});
    s.get("tau", c.aggregator.tau);
    s.get("tie_tol", c.aggregator.tie_tol);
  }
  if (auto s = detail::section(root, "server")) {
    s->only({"purity", "curation", "d0", "trusted_clients", "epochs_per_round", "lr", "warm_start",
             "pretrain_epochs", "curation_every", "stochastic_iters", "stochastic_sample"});
    s->get_enum("purity", c.server.purity, {{"pure", Purity::pure}, {"impure", Purity::impure}});
    s->get_enum("curation", c.server.curation,
                {{"none", Curation::none},
                 {"online", Curation::online},
                 {"stochastic", Curation::stochastic},
                 {"sorted", Curation::sorted}});
    s->get("d0", c.server.d0);
    s->get("trusted_clients", c.server.trusted_clients);
    s->get("epochs_per_round", c.server.epochs_per_round);
    s->get("lr", c.server.lr);
    s->get("warm_start", c.server.warm_start);
    s->get("pretrain_epochs", c.server.pretrain_epochs);
    s->get("curation_every", c.server.curation_every);
    s->get("stochastic_iters", c.server.stochastic_iters);
    s->get("stochastic_sample", c.server.stochastic_sample);
  }
  if (auto s = detail::section(root, "run")) {
    s->only({"max_rounds", "zeta", "master_seed", "snapshot_every"});
    s->get("max_rounds", c.run.max_rounds);
    s->get("zeta", c.run.zeta);
    s->get("master_seed", c.run.master_seed);
    s->get("snapshot_every", c.run.snapshot_every);
  }
  if (auto s = detail::section(root, "analysis")) {
    s->only({"bounds", "estimate_bounds"});
    s->get("estimate_bounds", out.analysis.estimate_bounds);
    if (s->has("bounds")) out.analysis.bounds = detail::parse_bounds(Section(s->at("bounds"), "analysis.bounds"));
  }

  c.validate();
  return out;
}

inline ParsedConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<document>: invalid JSON: ") + e.what(), "<document>");
  }
  return parse_config(root);
}

inline ParsedConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>: cannot open '" + path + "'", "<file>");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline json bounds_to_json(const BoundParams& p) {
  return {{"L1", p.L1}, {"L2", p.L2}, {"sigma1", p.sigma1}, {"sigma2", p.sigma2}, {"eta1", p.eta1}, {"eta2", p.eta2},
          {"eta", p.eta}, {"B", p.B}, {"R", p.R}, {"K", p.K}, {"N", p.N}, {"E", p.E}};
}

/// Every field of the resolved configuration, defaults included.
inline json config_to_json(const ParsedConfig& pc) {
  const ExperimentConfig& c = pc.experiment;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  static const char* sources[] = {"synthetic", "idx"};
  static const char* partitions[] = {"iid", "noniid"};
  static const char* updates[] = {"sgd", "esgd"};
  static const char* curations[] = {"none", "online", "stochastic", "sorted"};
  static const char* methods[] = {"fedavg", "softmax", "opt_exact", "opt_entropic", "utility"};

  json j;
  j["model"] = {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}};
  j["data"] = {{"source", sources[static_cast<int>(c.data.source)]},
               {"classes", c.data.classes},
               {"dim", c.data.dim},
               {"per_class", c.data.per_class},
               {"test_per_class", c.data.test_per_class},
               {"spread", c.data.spread},
               {"images", c.data.images},
               {"labels", c.data.labels},
               {"test_images", c.data.test_images},
               {"test_labels", c.data.test_labels},
               {"test_fraction", c.data.test_fraction},
               {"partition", partitions[static_cast<int>(c.data.partition)]},
               {"shards", c.data.shards},
               {"public_fraction", c.data.public_fraction}};
  j["clients"] = {{"population", c.clients.population},
                  {"cohort", c.clients.cohort},
                  {"local_epochs", c.clients.local_epochs},
                  {"batch_size", c.clients.batch_size},
                  {"lr", c.clients.lr},
                  {"local_update", updates[static_cast<int>(c.clients.local_update)]},
                  {"esgd_alpha", c.clients.esgd_alpha},
                  {"esgd_beta", c.clients.esgd_beta},
                  {"esgd_server", c.clients.esgd_server}};
  j["attackers"] = {{"count", c.attackers.count},
                    {"ids", c.attackers.ids},
                    {"kind", to_string(c.attackers.attack.kind)},
                    {"noise_scale", c.attackers.attack.noise_scale}};
  j["aggregator"] = {{"kind", methods[static_cast<int>(c.aggregator.method)]},
                     {"utility", to_string(c.aggregator.utility)},
                     {"tau", opt(c.aggregator.tau)},
                     {"tie_tol", c.aggregator.tie_tol}};
  j["server"] = {{"purity", to_string(c.server.purity)},
                 {"curation", curations[static_cast<int>(c.server.curation)]},
                 {"d0", opt(c.server.d0)},
                 {"trusted_clients", c.server.trusted_clients},
                 {"epochs_per_round", c.server.epochs_per_round},
                 {"lr", opt(c.server.lr)},
                 {"warm_start", c.server.warm_start},
                 {"pretrain_epochs", c.server.pretrain_epochs},
                 {"curation_every", c.server.curation_every},
                 {"stochastic_iters", c.server.stochastic_iters},
                 {"stochastic_sample", c.server.stochastic_sample}};
  j["run"] = {{"max_rounds", c.run.max_rounds},
              {"zeta", c.run.zeta},
              {"master_seed", c.run.master_seed},
              {"snapshot_every", c.run.snapshot_every}};
  j["analysis"] = {{"estimate_bounds", pc.analysis.estimate_bounds},
                   {"bounds", pc.analysis.bounds ? bounds_to_json(*pc.analysis.bounds) : json(nullptr)}};
  return j;
}

/// Sets a dotted key (e.g. "attackers.count") in a configuration document.
/// The value text is parsed as JSON when possible, otherwise kept as a string.
inline void set_config_key(json& root, const std::string& dotted, const std::string& value_text) {
  if (dotted.empty()) throw ConfigError("sweep key is empty", "<sweep>");
  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::parse_error&) {
    value = value_text;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(dotted + ": malformed key", dotted);
    if (!node->is_object()) throw ConfigError(dotted + ": parent is not an object", dotted);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace moefl
