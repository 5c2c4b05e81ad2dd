#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

using namespace hazdid;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hazdid");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string header(const fs::path& p) { return oracle::csv_lines(slurp(p)).at(0); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("hazdid_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  fs::path dir;

  fs::path table1_panel(std::size_t n, std::uint64_t seed) {
    auto path = dir / "panel.csv";
    write_panel_csv(simulate_panel(SimParams::table1(n), seed), path);
    return path;
  }
};

}  // namespace

TEST_F(CliTest, ValidateExitCodes) {
  auto good = table1_panel(200, 1);
  auto r = run({"validate", "--input", good.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("valid"), std::string::npos);

  std::ofstream(dir / "bad.csv") << "# t_star=2\nid,period,outcome,group\n1,1,0,1\n1,2,1,1\n1,3,0,1\n2,1,0,2\n2,2,0,2\n2,3,0,2\n";
  r = run({"validate", "--input", (dir / "bad.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("id 1, period 2"), std::string::npos) << r.out;

  r = run({"validate", "--input", (dir / "missing.csv").string()});
  EXPECT_EQ(r.code, 1);
  r = run({"validate"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, EstimateMatchesLibraryBitExactly) {
  auto path = table1_panel(5000, 11);
  auto out = dir / "est";
  auto r = run({"estimate", "--input", path.string(), "--outdir", out.string(), "--B", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto panel = require_valid(load_panel_csv(path));
  auto e = hazard_did(panel, EstimatorConfig{});
  EXPECT_EQ(slurp(out / "effects.csv"), report::effects_csv(e));
  EXPECT_FALSE(fs::exists(out / "bands.csv"));
}

TEST_F(CliTest, PropHazardWritesDistinctCoefficient) {
  auto path = table1_panel(5000, 11);
  ASSERT_EQ(run({"estimate", "--input", path.string(), "--outdir", (dir / "a").string(), "--B", "0"}).code, 0);
  ASSERT_EQ(run({"estimate", "--input", path.string(), "--outdir", (dir / "b").string(), "--B", "0", "--method",
                 "prop-hazard"})
                .code,
            0);
  auto a = nlohmann::json::parse(slurp(dir / "a" / "effects.json"));
  auto b = nlohmann::json::parse(slurp(dir / "b" / "effects.json"));
  EXPECT_EQ(b["estimates"]["method"], "prop_hazard");
  EXPECT_NE(a["estimates"]["coefficients"][0].get<double>(), b["estimates"]["coefficients"][0].get<double>());
  EXPECT_EQ(b["config"]["method"], "prop-hazard");
}

TEST_F(CliTest, EstimateRequiresSeedForBootstrap) {
  auto path = table1_panel(400, 2);
  auto r = run({"estimate", "--input", path.string(), "--outdir", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);
}

TEST_F(CliTest, EstimateWithBandsPlotsAndDeterminism) {
  auto path = table1_panel(1000, 3);
  std::vector<std::string> args{"estimate", "--input", path.string(), "--B", "100", "--seed", "5", "--plots",
                                "--alpha", "geometric:0.8", "--window", "3:18"};
  auto a = args, b = args;
  a.insert(a.end(), {"--outdir", (dir / "a").string()});
  b.insert(b.end(), {"--outdir", (dir / "b").string(), "--threads", "3"});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  for (auto f : {"effects.csv", "bands.csv", "hazards.csv", "plots/hazards.svg", "plots/means.svg", "plots/effects.svg"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  EXPECT_EQ(header(dir / "a" / "hazards.csv"), "group,period,hazard,weighted");
  EXPECT_EQ(oracle::csv_lines(slurp(dir / "a" / "effects.csv")).size(), 9u);  // header + t = 11..18
  auto j = nlohmann::json::parse(slurp(dir / "a" / "effects.json"));
  EXPECT_EQ(j["inference"]["replicates"], 100);
  EXPECT_EQ(j["config"]["alpha"], "geometric:0.8");
  EXPECT_NE(slurp(dir / "a" / "plots/hazards.svg").find("stroke-dasharray"), std::string::npos);
}

TEST_F(CliTest, LinearConstraintsAndForceBands) {
  auto path = table1_panel(2000, 4);
  auto r = run({"estimate", "--input", path.string(), "--outdir", dir.string(), "--B", "0", "--method", "linear",
                "--constraints", "W2=1"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(slurp(dir / "effects.json"));
  EXPECT_EQ(j["estimates"]["coefficients"][1], 1.0);
  r = run({"estimate", "--input", path.string(), "--outdir", dir.string(), "--B", "0", "--constraints", "W2=1"});
  EXPECT_EQ(r.code, 1);
  r = run({"estimate", "--input", path.string(), "--outdir", dir.string(), "--B", "0", "--method", "linear",
           "--constraints", "bogus"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, CovariateAdjustmentReportsDroppedCount) {
  auto path = dir / "strat.csv";
  write_panel_csv(simulate_panel(SimParams::stratified(2000), 9), path);
  auto r = run({"estimate", "--input", path.string(), "--outdir", dir.string(), "--covariate", "d_stratum", "--B",
                "50", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(slurp(dir / "effects.json"));
  EXPECT_GT(j["estimates"]["dropped_overlap"].get<double>(), 0);
  EXPECT_EQ(header(dir / "weights.csv"), "x,weight,count_treated,count_untreated,dropped");
  EXPECT_NE(r.err.find("dropped"), std::string::npos);
  r = run({"estimate", "--input", path.string(), "--outdir", dir.string(), "--propensity", "d_stratum", "--B", "0"});
  EXPECT_EQ(r.code, 1);  // the treated-only stratum separates the logit
  EXPECT_NE(r.err.find("separation"), std::string::npos) << r.err;
}

TEST_F(CliTest, TruncateHorizon) {
  // group 2 fully absorbed by t=5: hazards undefined from there on
  std::ostringstream csv;
  csv << "# t_star=4\nid,period,outcome,group\n";
  int id = 0;
  for (int j = 0; j < 20; ++j, ++id)
    for (int t = 1; t <= 8; ++t) csv << id << ',' << t << ',' << (t >= 2 + j % 6 ? 1 : 0) << ",1\n";
  for (int j = 0; j < 20; ++j, ++id)
    for (int t = 1; t <= 8; ++t) csv << id << ',' << t << ',' << (t >= 2 + j % 4 ? 1 : 0) << ",2\n";
  std::ofstream(dir / "p.csv") << csv.str();
  auto r = run({"estimate", "--input", (dir / "p.csv").string(), "--outdir", dir.string(), "--B", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("survivor share zero"), std::string::npos) << r.err;
  r = run({"estimate", "--input", (dir / "p.csv").string(), "--outdir", dir.string(), "--B", "0", "--truncate-horizon"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(oracle::csv_lines(slurp(dir / "effects.csv")).back().substr(0, 2), "4,");
}

TEST_F(CliTest, SpectestExitCodesAndOutputs) {
  // mean-mode test on a large hazard-parallel panel rejects
  auto path = table1_panel(10000, 12);
  auto r = run({"spectest", "--input", path.string(), "--outdir", dir.string(), "--mode", "mean", "--B", "200",
                "--seed", "3", "--plots"});
  EXPECT_EQ(r.code, 3) << r.out << r.err;
  EXPECT_EQ(header(dir / "delta.csv"), "period,delta,lo,hi");
  EXPECT_TRUE(fs::exists(dir / "plot.svg"));
  auto j = nlohmann::json::parse(slurp(dir / "spectest.json"));
  EXPECT_EQ(j["result"]["reject"], true);
  EXPECT_EQ(j["config"]["mode"], "mean");

  // identical groups never reject
  auto raw = simulate_panel(SimParams::table1(400), 2);
  for (std::size_t i = 0; i < raw.individuals; ++i) raw.groups[i] = 1;
  auto dup = raw;
  for (std::size_t i = 0; i < raw.individuals; ++i) {
    dup.ids.push_back("c" + raw.ids[i]);
    dup.groups.push_back(2);
    for (int t = 1; t <= raw.periods; ++t) dup.outcomes.push_back(static_cast<std::uint8_t>(raw.outcome(i, t)));
  }
  dup.individuals *= 2;
  write_panel_csv(dup, dir / "same.csv");
  r = run({"spectest", "--input", (dir / "same.csv").string(), "--outdir", dir.string(), "--B", "100", "--seed", "1"});
  EXPECT_EQ(r.code, 0) << r.err;

  // t* < 4 is a usage error
  r = run({"spectest", "--input", (dir / "same.csv").string(), "--outdir", dir.string(), "--B", "100", "--seed", "1",
           "--tstar", "3"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no testable pre-periods"), std::string::npos);
}

TEST_F(CliTest, SimulateMetricsSchemaAndDeterminism) {
  std::vector<std::string> base{"simulate", "--preset", "table1", "--n", "200", "--reps", "4", "--B", "40", "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--outdir", (dir / "a").string(), "--dump-replicates"});
  b.insert(b.end(), {"--outdir", (dir / "b").string(), "--threads", "2"});
  auto r = run(a);
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "metrics.txt"), slurp(dir / "b" / "metrics.txt"));
  auto lines = oracle::csv_lines(slurp(dir / "a" / "metrics.csv"));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0] + "\n", report::kMetricsHeader);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = cli::split(lines[i], ',');
    EXPECT_EQ(cells.size(), 13u);
    for (const auto& c : cells) EXPECT_NE(c, "nan");
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "replicates.csv"));
  EXPECT_EQ(run({"simulate", "--reps", "2"}).code, 1);  // seed required
}

TEST_F(CliTest, EmittedPanelValidates) {
  auto r = run({"simulate", "--n", "100", "--reps", "0", "--emit-panels", "1", "--seed", "3", "--outdir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto panel = dir / "panels" / "panel_001.csv";
  EXPECT_EQ(run({"validate", "--input", panel.string()}).code, 0);
  // same draw as the first Monte Carlo replicate
  auto expect = simulate_panel(SimParams::table1_row(100), derive_seed(3, streams::kReplicate, 0));
  EXPECT_TRUE(load_panel_csv(panel) == expect);
}

TEST_F(CliTest, HelpAndUnknownFlags) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"estimate", "--bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}
