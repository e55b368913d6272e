// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the moefl tool. Each returns a process exit status:
// 0 success, 1 runtime failure, 2 invalid configuration or parameters.
#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moefl/analysis.hpp"
#include "moefl/config.hpp"
#include "moefl/idx.hpp"
#include "moefl/report.hpp"
#include "moefl/simulator.hpp"

namespace moefl {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

namespace fs = std::filesystem;

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

inline void write_params_file(const fs::path& path, const ParamVector& w) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_params(os, w);
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::string snapshot_name(std::size_t round) {
  std::ostringstream ss;
  ss << "round_" << std::setw(5) << std::setfill('0') << round << ".params";
  return ss.str();
}

inline double tail_mean_accuracy(const std::vector<RoundRecord>& recs, std::size_t tail) {
  if (recs.empty()) return 0.0;
  const std::size_t k = std::min(tail, recs.size());
  double s = 0.0;
  for (std::size_t i = recs.size() - k; i < recs.size(); ++i) s += recs[i].test_accuracy;
  return s / static_cast<double>(k);
}

/// Empirical constants at the final model, using the clients' own data
/// (poisoned for data attacks).
inline BoundParams estimate_for_run(const ExperimentConfig& cfg, const RunResult& res) {
  const SimulationState st = initialize(cfg);
  BoundEstimateInputs in;
  in.spec = res.spec;
  in.w = res.final_model;
  in.batch_size = cfg.clients.batch_size;
  in.seed = cfg.run.master_seed;
  double mean_size = 0.0;
  for (std::size_t c = 0; c < st.roles.size(); ++c) {
    mean_size += static_cast<double>(st.client_data[c].size());
    if (st.roles[c] == Role::legitimate) {
      in.legitimate.push_back(st.client_data[c]);
    } else if (is_model_attack(cfg.attackers.attack.kind)) {
      in.attackers.push_back(st.client_data[c]);
    } else {
      Rng rng = poisoning_stream(cfg.run.master_seed, cfg.attackers.attack.kind, c, 1);
      in.attackers.push_back(poison_dataset(st.client_data[c], cfg.attackers.attack.kind, rng));
    }
  }
  mean_size /= static_cast<double>(st.roles.size());
  const double steps_per_epoch = std::max(1.0, std::ceil(mean_size / static_cast<double>(cfg.clients.batch_size)));
  in.R = static_cast<double>(std::max<std::size_t>(1, res.records.size()));
  in.K = std::max(1.0, static_cast<double>(cfg.clients.local_epochs) * steps_per_epoch);
  in.N = static_cast<double>(cfg.clients.population);
  in.E = static_cast<double>(st.attacker_ids.size());
  return estimate_bound_params(in);
}

inline json summary_json(const ParsedConfig& pc, const RunResult& res) {
  const ExperimentConfig& cfg = pc.experiment;
  json j;
  j["config"] = config_to_json(pc);
  j["stop_reason"] = res.stop_reason;
  j["rounds_run"] = res.records.size();
  j["final_accuracy"] = res.records.empty() ? 0.0 : res.records.back().test_accuracy;
  j["final20_mean_accuracy"] = tail_mean_accuracy(res.records, 20);
  j["attacker_ids"] = res.attacker_ids;
  j["trusted_ids"] = res.trusted_ids;
  j["d0"] = res.d0;
  j["server_data_size"] = res.server_data_size;
  j["curated_size"] = res.curated_size;
  j["outlier_clients"] = res.outlier_clients;

  json curation = json::array();
  for (const auto& d : res.curation_log)
    curation.push_back({{"key", d.key}, {"delta", d.delta}, {"accepted", d.accepted}});
  j["curation"] = curation;

  const RhoReport rho = rho_report(res.records, roles_from_attackers(cfg.clients.population, res.attacker_ids));
  json rho_j = rho_report_to_json(rho);
  rho_j.erase("rounds");
  j["rho"] = rho_j;

  std::optional<BoundParams> bounds = pc.analysis.bounds;
  std::string source = "config";
  if (!bounds && pc.analysis.estimate_bounds) {
    bounds = estimate_for_run(cfg, res);
    source = "estimated (sampling heuristic, not certified)";
  }
  if (bounds) {
    j["bounds"] = {{"source", source}, {"params", bounds_to_json(*bounds)}, {"evaluations", lemma2_to_json(*bounds)}};
  } else {
    j["bounds"] = nullptr;
  }
  j["pca"] = pca_to_json(res.records);
  return j;
}

/// Executes a parsed configuration and writes every artifact under `out`.
inline RunResult execute_run(const ParsedConfig& pc, const fs::path& out, std::size_t threads) {
  fs::create_directories(out / "snapshots");
  RunOptions opts;
  opts.threads = threads;
  RunResult res = run(pc.experiment, opts);

  std::ostringstream csv;
  write_metrics_csv(csv, res.records);
  write_text(out / "metrics.csv", csv.str());

  json recs = json::array();
  for (const auto& r : res.records) recs.push_back(record_to_json(r));
  write_text(out / "records.json", recs.dump(1) + "\n");
  write_text(out / "summary.json", summary_json(pc, res).dump(2) + "\n");

  write_params_file(out / "final_model.params", res.final_model);
  json snaps = json::array();
  for (const auto& [round, w] : res.snapshots) {
    const std::string name = snapshot_name(round);
    write_params_file(out / "snapshots" / name, w);
    snaps.push_back("snapshots/" + name);
  }

  json manifest;
  manifest["tool"] = "moefl";
  manifest["tool_version"] = kToolVersion;
  manifest["master_seed"] = pc.experiment.run.master_seed;
  manifest["config"] = config_to_json(pc);
  manifest["artifacts"] = {{"metrics_csv", "metrics.csv"},
                           {"summary_json", "summary.json"},
                           {"records_json", "records.json"},
                           {"final_model", "final_model.params"},
                           {"snapshot_dir", "snapshots"},
                           {"snapshots", snaps}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return res;
}

inline json load_config_json(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error&) {
    throw ConfigError("<file>: cannot open '" + path + "'", "<file>");
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<document>: invalid JSON: ") + e.what(), "<document>");
  }
}

inline bool has_dotted_key(const json& root, const std::string& dotted) {
  const json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) return false;
    node = &node->at(part);
    if (dot == std::string::npos) return true;
    start = dot + 1;
  }
}

inline std::string sanitize(std::string s) {
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_' || ch == '=')) ch = '_';
  return s;
}

}  // namespace detail

inline int cmd_run(const std::string& config_path, const std::string& out_dir, std::ostream& err,
                   std::size_t threads = 0) {
  ParsedConfig pc;
  try {
    pc = parse_config(detail::load_config_json(config_path));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    detail::execute_run(pc, out_dir, threads);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct SweepOptions {
  std::string key;
  std::vector<std::string> values;
  /// Give every sub-run its own seed derived from the base seed and the
  /// value index. Off by default so sub-runs share random streams.
  bool derive_seeds = false;
};

inline int cmd_sweep(const std::string& config_path, const SweepOptions& sw, const std::string& out_dir,
                     std::ostream& err, std::size_t threads = 0) {
  json base;
  ParsedConfig base_pc;
  try {
    base = detail::load_config_json(config_path);
    base_pc = parse_config(base);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (sw.values.empty()) {
    err << "config error: <sweep>: no values given\n";
    return kExitConfig;
  }
  if (!detail::has_dotted_key(config_to_json(base_pc), sw.key)) {
    err << "config error: " << sw.key << ": not a configuration key\n";
    return kExitConfig;
  }

  std::ostringstream cmp;
  cmp << "key,value," << kMetricsHeader << '\n';
  std::size_t failures = 0;
  try {
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    err << "sweep failed: " << e.what() << '\n';
    return kExitFailure;
  }
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    const std::string& value = sw.values[i];
    const fs::path sub = fs::path(out_dir) / detail::sanitize(sw.key + "=" + value);
    try {
      json doc = base;
      set_config_key(doc, sw.key, value);
      if (sw.derive_seeds)
        set_config_key(doc, "run.master_seed",
                       std::to_string(derive_seed(base_pc.experiment.run.master_seed, "sweep", i)));
      const ParsedConfig pc = parse_config(doc);
      const RunResult res = detail::execute_run(pc, sub, threads);
      std::ostringstream rows;
      write_metrics_csv(rows, res.records);
      std::istringstream lines(rows.str());
      std::string line;
      std::getline(lines, line);  // header
      while (std::getline(lines, line)) cmp << sw.key << ',' << value << ',' << line << '\n';
    } catch (const std::exception& e) {
      ++failures;
      err << "sub-run " << sw.key << "=" << value << " failed: " << e.what() << '\n';
    }
  }
  try {
    detail::write_text(fs::path(out_dir) / "comparison.csv", cmp.str());
  } catch (const std::exception& e) {
    err << "sweep failed: " << e.what() << '\n';
    return kExitFailure;
  }
  if (failures > 0) {
    err << failures << " of " << sw.values.size() << " sub-runs failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

struct GenDataParams {
  std::string kind = "synthetic";
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t per_class = 160;
  double spread = 0.15;
  std::uint64_t seed = 1;
  IdxPixelFormat format = IdxPixelFormat::f64;
};

inline std::string gen_data_images_path(const std::string& out_dir) { return (fs::path(out_dir) / "images.idx").string(); }
inline std::string gen_data_labels_path(const std::string& out_dir) { return (fs::path(out_dir) / "labels.idx").string(); }

inline int cmd_gen_data(const GenDataParams& p, const std::string& out_dir, std::ostream& err) {
  if (p.kind != "synthetic") {
    err << "config error: kind: unknown dataset kind '" << p.kind << "'\n";
    return kExitConfig;
  }
  auto bad = [&](const char* field, const char* msg) {
    err << "config error: " << field << ": " << msg << '\n';
    return kExitConfig;
  };
  if (p.classes < 2) return bad("classes", "must be >= 2");
  if (p.classes > 256) return bad("classes", "must be <= 256");
  if (p.dim == 0) return bad("dim", "must be >= 1");
  if (p.per_class == 0) return bad("per_class", "must be >= 1");
  if (!(p.spread > 0.0) || !std::isfinite(p.spread)) return bad("spread", "must be > 0");
  try {
    fs::create_directories(out_dir);
    const Dataset ds = gen_synthetic(p.classes, p.dim, p.per_class, p.spread, p.seed);
    write_idx(ds, gen_data_images_path(out_dir), gen_data_labels_path(out_dir), p.format);
  } catch (const std::exception& e) {
    err << "gen-data failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

/// Recomputes rho summaries, PCA and bound evaluations from a run directory
/// and writes analysis.json next to it.
inline int cmd_analyze(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  try {
    const fs::path dir(run_dir);
    const json manifest = detail::read_json(dir / "manifest.json");
    const json summary = detail::read_json(dir / manifest.at("artifacts").at("summary_json").get<std::string>());
    const json recs_j = detail::read_json(dir / manifest.at("artifacts").at("records_json").get<std::string>());
    std::vector<RoundRecord> records;
    for (const json& r : recs_j) records.push_back(record_from_json(r));
    const std::size_t population = manifest.at("config").at("clients").at("population").get<std::size_t>();
    const auto attackers = summary.at("attacker_ids").get<std::vector<std::size_t>>();
    const RhoReport rho = rho_report(records, roles_from_attackers(population, attackers));

    json a;
    a["rho"] = rho_report_to_json(rho);
    a["pca"] = pca_to_json(records);
    json bias = json::array();
    json n_moe = json::array();
    for (const auto& r : records) {
      bias.push_back(r.bias);
      n_moe.push_back(r.zero_rho_count);
    }
    a["bias_per_round"] = bias;
    a["zero_rho_per_round"] = n_moe;
    if (!summary.at("bounds").is_null()) {
      const ParsedConfig pc = parse_config(json{{"aggregator", {{"kind", "fedavg"}}},
                                                {"analysis", {{"bounds", summary.at("bounds").at("params")}}}});
      a["bounds"] = lemma2_to_json(*pc.analysis.bounds);
    }
    detail::write_text(dir / "analysis.json", a.dump(2) + "\n");

    out << "rounds: " << records.size() << '\n'
        << "final accuracy: " << format_real(records.empty() ? 0.0 : records.back().test_accuracy) << '\n'
        << "cumulative attacker rho mass: " << format_real(rho.cumulative_attacker_mass) << '\n'
        << "max attacker rho: " << format_real(rho.max_attacker_rho) << '\n';
    if (a.contains("bounds"))
      out << "pure threshold: " << format_real(a["bounds"]["pure_threshold"].get<double>()) << '\n'
          << "impure threshold: " << format_real(a["bounds"]["impure_threshold"].get<double>()) << '\n';
  } catch (const std::exception& e) {
    err << "analyze failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace moefl
