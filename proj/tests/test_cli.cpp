// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moefl/cli.hpp"

using namespace moefl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moefl_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_config_text(const std::string& aggregator_section = R"("aggregator": {"kind": "opt_exact"},)") {
  return R"({
  "model": {"hidden": [8]},
  "data": {"classes": 4, "dim": 8, "per_class": 30, "test_per_class": 10, "shards": 12},
  "clients": {"population": 6, "cohort": 3},
  "attackers": {"count": 2, "kind": "negative_weight"},
  )" + aggregator_section +
         R"(
  "run": {"max_rounds": 4, "zeta": 1e-12, "master_seed": 5, "snapshot_every": 2},
  "analysis": {"bounds": {"L1": 1, "sigma1": 0.5, "eta1": 0.2, "B": 1, "R": 10, "K": 1, "N": 6, "E": 2}}
})";
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

int run_binary(const std::string& args) {
  const std::string cmd = std::string(MOEFL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(CmdRun, MissingAggregatorIsConfigErrorNamingKey) {
  const fs::path d = scratch("missing_agg");
  const fs::path cfg = write_config(d, small_config_text(""));
  std::ostringstream err;
  EXPECT_EQ(cmd_run(cfg.string(), (d / "out").string(), err), kExitConfig);
  EXPECT_NE(err.str().find("aggregator"), std::string::npos) << err.str();
}

TEST(CmdRun, UnknownKeyIsConfigError) {
  const fs::path d = scratch("unknown_key");
  std::string text = small_config_text();
  text.replace(text.find("\"cohort\""), 8, "\"cohrot\"");
  std::ostringstream err;
  EXPECT_EQ(cmd_run(write_config(d, text).string(), (d / "out").string(), err), kExitConfig);
  EXPECT_NE(err.str().find("clients.cohrot"), std::string::npos) << err.str();
}

TEST(CmdRun, WritesArtifacts) {
  const fs::path d = scratch("artifacts");
  std::ostringstream err;
  ASSERT_EQ(cmd_run(write_config(d, small_config_text()).string(), (d / "out").string(), err), kExitOk) << err.str();
  for (const char* f : {"metrics.csv", "records.json", "summary.json", "manifest.json", "final_model.params"})
    EXPECT_TRUE(fs::exists(d / "out" / f)) << f;
  EXPECT_TRUE(fs::exists(d / "out" / "snapshots" / "round_00002.params"));
  const std::string csv = slurp(d / "out" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(line_count(csv), 5u);
  const json manifest = json::parse(slurp(d / "out" / "manifest.json"));
  EXPECT_EQ(manifest.at("master_seed").get<std::uint64_t>(), 5u);
  EXPECT_EQ(manifest.at("config").at("aggregator").at("kind"), "opt_exact");
}

TEST(CmdRun, RepeatedRunsAreByteIdentical) {
  const fs::path d = scratch("repeat");
  const fs::path cfg = write_config(d, small_config_text());
  std::ostringstream err;
  ASSERT_EQ(cmd_run(cfg.string(), (d / "a").string(), err, 1), kExitOk);
  ASSERT_EQ(cmd_run(cfg.string(), (d / "b").string(), err, 8), kExitOk);
  EXPECT_EQ(slurp(d / "a" / "metrics.csv"), slurp(d / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(d / "a" / "final_model.params"), slurp(d / "b" / "final_model.params"));
}

TEST(CmdRun, ManifestConfigReproducesRun) {
  const fs::path d = scratch("manifest_echo");
  std::ostringstream err;
  ASSERT_EQ(cmd_run(write_config(d, small_config_text()).string(), (d / "a").string(), err), kExitOk);
  const json manifest = json::parse(slurp(d / "a" / "manifest.json"));
  const fs::path echo = d / "echo.json";
  std::ofstream(echo) << manifest.at("config").dump(2);
  ASSERT_EQ(cmd_run(echo.string(), (d / "b").string(), err), kExitOk) << err.str();
  EXPECT_EQ(slurp(d / "a" / "metrics.csv"), slurp(d / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(d / "a" / "records.json"), slurp(d / "b" / "records.json"));
}

TEST(CmdSweep, SingleValueMatchesPlainRun) {
  const fs::path d = scratch("sweep_one");
  const fs::path cfg = write_config(d, small_config_text());
  std::ostringstream err;
  ASSERT_EQ(cmd_run(cfg.string(), (d / "run").string(), err), kExitOk);
  ASSERT_EQ(cmd_sweep(cfg.string(), {"attackers.count", {"2"}}, (d / "sweep").string(), err), kExitOk) << err.str();
  EXPECT_EQ(slurp(d / "run" / "metrics.csv"), slurp(d / "sweep" / "attackers.count=2" / "metrics.csv"));
}

TEST(CmdSweep, OneDirectoryPerValueAndComparisonRows) {
  const fs::path d = scratch("sweep_three");
  const fs::path cfg = write_config(d, small_config_text());
  std::ostringstream err;
  ASSERT_EQ(cmd_sweep(cfg.string(), {"attackers.count", {"0", "1", "2"}}, (d / "out").string(), err), kExitOk)
      << err.str();
  for (const char* v : {"0", "1", "2"}) EXPECT_TRUE(fs::exists(d / "out" / ("attackers.count=" + std::string(v))));
  const std::string cmp = slurp(d / "out" / "comparison.csv");
  EXPECT_EQ(line_count(cmp), 1u + 3u * 4u);
  EXPECT_EQ(cmp.substr(0, cmp.find('\n')), std::string("key,value,") + kMetricsHeader);
}

TEST(CmdSweep, UnknownKeyIsConfigError) {
  const fs::path d = scratch("sweep_bad");
  std::ostringstream err;
  EXPECT_EQ(cmd_sweep(write_config(d, small_config_text()).string(), {"attackers.budget", {"1"}},
                      (d / "out").string(), err),
            kExitConfig);
}

TEST(CmdSweep, FailingSubRunIsRuntimeFailure) {
  const fs::path d = scratch("sweep_fail");
  std::ostringstream err;
  // A cohort larger than the population passes parsing of the base config but not the sub-run.
  EXPECT_EQ(cmd_sweep(write_config(d, small_config_text()).string(), {"clients.cohort", {"3", "9"}},
                      (d / "out").string(), err),
            kExitFailure);
  EXPECT_TRUE(fs::exists(d / "out" / "clients.cohort=3" / "metrics.csv"));
}

TEST(CmdGenData, RoundTripsThroughIdx) {
  const fs::path d = scratch("gen");
  GenDataParams p;
  p.classes = 3;
  p.dim = 5;
  p.per_class = 4;
  p.seed = 9;
  std::ostringstream err;
  ASSERT_EQ(cmd_gen_data(p, d.string(), err), kExitOk) << err.str();
  const Dataset back = load_idx(gen_data_images_path(d.string()), gen_data_labels_path(d.string()));
  EXPECT_EQ(back, gen_synthetic(3, 5, 4, p.spread, 9));
}

TEST(CmdGenData, SameSeedSameBytes) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  GenDataParams p;
  p.per_class = 10;
  p.format = IdxPixelFormat::u8;
  std::ostringstream err;
  ASSERT_EQ(cmd_gen_data(p, a.string(), err), kExitOk);
  ASSERT_EQ(cmd_gen_data(p, b.string(), err), kExitOk);
  EXPECT_EQ(slurp(a / "images.idx"), slurp(b / "images.idx"));
  EXPECT_EQ(slurp(a / "labels.idx"), slurp(b / "labels.idx"));
}

TEST(CmdGenData, BadArgumentsAndUnwritablePath) {
  const fs::path d = scratch("gen_bad");
  GenDataParams p;
  p.per_class = 0;
  std::ostringstream err;
  EXPECT_EQ(cmd_gen_data(p, d.string(), err), kExitConfig);
  p.per_class = 2;
  std::ofstream(d / "blocker") << "x";
  EXPECT_EQ(cmd_gen_data(p, (d / "blocker" / "sub").string(), err), kExitFailure);
}

TEST(CmdAnalyze, WritesAnalysisJson) {
  const fs::path d = scratch("analyze");
  std::ostringstream err, out;
  ASSERT_EQ(cmd_run(write_config(d, small_config_text()).string(), (d / "run").string(), err), kExitOk);
  ASSERT_EQ(cmd_analyze((d / "run").string(), out, err), kExitOk) << err.str();
  const json a = json::parse(slurp(d / "run" / "analysis.json"));
  EXPECT_TRUE(a.contains("rho"));
  EXPECT_TRUE(a.contains("pca"));
  EXPECT_TRUE(a.contains("bounds"));
  EXPECT_NE(out.str().find("rounds: 4"), std::string::npos);
  EXPECT_EQ(cmd_analyze((d / "missing").string(), out, err), kExitFailure);
}

TEST(Binary, ExitCodes) {
  const fs::path d = scratch("binary");
  const fs::path good = write_config(d, small_config_text());
  const fs::path bad = d / "bad.json";
  std::ofstream(bad) << small_config_text("");
  EXPECT_EQ(run_binary("run --config " + good.string() + " --out " + (d / "ok").string()), 0);
  EXPECT_EQ(run_binary("run --config " + bad.string() + " --out " + (d / "bad").string()), 2);
  EXPECT_EQ(run_binary("gen-data --per-class 0 --out " + (d / "g").string()), 2);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("analyze --run " + (d / "ok").string()), 0);
}
