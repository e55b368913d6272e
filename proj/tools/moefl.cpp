// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moefl/cli.hpp"

namespace {

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts federated learning simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", moefl::kToolVersion);

  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: MOEFL_THREADS or hardware)");

  std::string config, out;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment JSON")->required();
  run->add_option("--out", out, "Output directory")->required();

  std::string key, values;
  bool derive_seeds = false;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a config key");
  sweep->add_option("--config", config, "Base experiment JSON")->required();
  sweep->add_option("--key", key, "Dotted config key, e.g. attackers.count")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_flag("--derive-seeds", derive_seeds, "Use a distinct derived seed per value");

  moefl::GenDataParams gen;
  std::string format = "f64";
  auto* gen_data = app.add_subcommand("gen-data", "Write a synthetic dataset as IDX files");
  gen_data->add_option("--kind", gen.kind, "Dataset kind")->capture_default_str();
  gen_data->add_option("--classes", gen.classes)->capture_default_str();
  gen_data->add_option("--dim", gen.dim)->capture_default_str();
  gen_data->add_option("--per-class", gen.per_class)->capture_default_str();
  gen_data->add_option("--spread", gen.spread)->capture_default_str();
  gen_data->add_option("--seed", gen.seed)->capture_default_str();
  gen_data->add_option("--format", format, "Pixel format")->check(CLI::IsMember({"f64", "u8"}))->capture_default_str();
  gen_data->add_option("--out", out, "Output directory")->required();

  std::string run_dir;
  auto* analyze = app.add_subcommand("analyze", "Summarize a finished run directory");
  analyze->add_option("--run", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : moefl::kExitConfig;
  }

  if (*run) return moefl::cmd_run(config, out, std::cerr, threads);
  if (*sweep) return moefl::cmd_sweep(config, {key, split_values(values), derive_seeds}, out, std::cerr, threads);
  if (*gen_data) {
    gen.format = format == "u8" ? moefl::IdxPixelFormat::u8 : moefl::IdxPixelFormat::f64;
    return moefl::cmd_gen_data(gen, out, std::cerr);
  }
  return moefl::cmd_analyze(run_dir, std::cout, std::cerr);
}
