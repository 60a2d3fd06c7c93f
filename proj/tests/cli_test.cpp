#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "repgn/cli.hpp"

using namespace repgn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string> &args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string tmp(const std::string &name) { return (fs::path(REPGN_TEST_TMPDIR) / ("cli_test_" + name)).string(); }

std::string write(const std::string &name, const std::string &text) {
  const auto p = tmp(name);
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

const char *two_boxes = R"({"image_id": "pair", "width": 100, "height": 100,
  "proposals": [{"box": [0, 0, 20, 20]}, {"box": [10, 10, 30, 30]}]})";

} // namespace

TEST(Cli, GraphBuildTwoBoxes) {
  const auto in = write("two.json", two_boxes);
  const auto out = tmp("two_graph.json");
  const auto r = run({"graph", "build", "--input", in, "--iou-thr", "0.1", "--output", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::Json::parse(slurp(out));
  ASSERT_EQ(j["edges"].size(), 1u);
  EXPECT_EQ(j["edges"][0][0], 0);
  EXPECT_EQ(j["edges"][0][1], 1);
  EXPECT_DOUBLE_EQ(j["edges"][0][2].get<double>(), 1.0 / 7.0);
  // above the overlap, no edge
  ASSERT_EQ(run({"graph", "build", "--input", in, "--iou-thr", "0.2", "--output", out}).code, 0);
  EXPECT_TRUE(io::Json::parse(slurp(out))["edges"].empty());
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Subcommands"), std::string::npos) << r.err;
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"graph", "build", "--input", "x"}).code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, ComponentsOutput) {
  const auto g = write("comp_graph.json", R"({"nodes": 5, "edges": [[0, 1, 0.5], [1, 2, 0.5], [3, 4, 0.9]]})");
  const auto r = run({"graph", "components", "--input", g, "--min-size", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::Json::parse(r.out);
  EXPECT_EQ(j["labels"].dump(), "[0,0,0,1,1]");
  EXPECT_EQ(j["component_sizes"].dump(), "[3,2]");
  EXPECT_EQ(j["kept"].dump(), "[0,1,2]");
  EXPECT_EQ(j["removed"].dump(), "[3,4]");
}

TEST(Cli, CutOnBridgedTriangles) {
  const auto g = write("tri_graph.json", R"({"nodes": 6, "edges": [[0, 1, 1], [0, 2, 1], [1, 2, 1],
      [3, 4, 1], [3, 5, 1], [4, 5, 1], [2, 3, 0.1]]})");
  for (const bool brute : {false, true}) {
    std::vector<std::string> args = {"cut", "ncut", "--input", g};
    if (brute)
      args.push_back("--brute-force");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = io::Json::parse(r.out);
    EXPECT_EQ(j["labels"].dump(), "[0,0,0,1,1,1]");
    EXPECT_NEAR(j["ncut"].get<double>(), 2 * 0.1 / 6.1, 1e-12);
  }
}

TEST(Cli, BruteForceSizeLimit) {
  std::string edges;
  for (int i = 0; i + 1 < 16; ++i)
    edges += (i ? ", [" : "[") + std::to_string(i) + ", " + std::to_string(i + 1) + ", 1]";
  const auto g = write("path16.json", R"({"nodes": 16, "edges": [)" + edges + "]}");
  const auto r = run({"cut", "ncut", "--input", g, "--brute-force"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, OracleNcutPasses) {
  const auto r = run({"oracle", "ncut", "--max-n", "10", "--trials", "200", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("200/200"), std::string::npos);
}

TEST(Cli, OracleGradPasses) {
  const auto r = run({"oracle", "grad", "--trials", "20", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}

TEST(Cli, GenIsByteIdenticalForSameSeed) {
  const auto a = tmp("gen_a.json"), b = tmp("gen_b.json"), c = tmp("gen_c.json");
  ASSERT_EQ(run({"gen", "--clusters", "3", "--per-cluster", "5", "--seed", "11", "--output", a}).code, 0);
  ASSERT_EQ(run({"gen", "--clusters", "3", "--per-cluster", "5", "--seed", "11", "--output", b}).code, 0);
  ASSERT_EQ(run({"gen", "--clusters", "3", "--per-cluster", "5", "--seed", "12", "--output", c}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
  EXPECT_EQ(io::load_proposals(a).size(), 15u);
}

TEST(Cli, MalformedInputLeavesNoOutput) {
  const auto in = write("bad.json", R"({"image_id": "x", "width": 10, "height": 10, "proposals": [{"box": [5, 5, 1, 1]}]})");
  const auto cfg = write("cfg_default.json", "{}");
  const auto out = tmp("bad_out.json");
  fs::remove(out);
  for (const std::vector<std::string> &args :
       {std::vector<std::string>{"graph", "build", "--input", in, "--output", out},
        std::vector<std::string>{"forward", "--input", in, "--config", cfg, "--output", out},
        std::vector<std::string>{"pool", "gcpool", "--input", in, "--config", cfg, "--output", out}}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("proposals[0].box"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
  }
}

TEST(Cli, InvalidConfigIsInputError) {
  const auto in = write("two_cfg.json", two_boxes);
  const auto cfg = write("cfg_bad.json", R"({"lambda": -1})");
  const auto cfg2 = write("cfg_unknown.json", R"({"colour": 1})");
  EXPECT_EQ(run({"forward", "--input", in, "--config", cfg, "--output", tmp("x.json")}).code, 1);
  EXPECT_EQ(run({"forward", "--input", in, "--config", cfg2, "--output", tmp("x.json")}).code, 1);
}

TEST(Cli, ForwardAndReport) {
  const auto scene = tmp("fw_scene.json");
  ASSERT_EQ(run({"gen", "--clusters", "3", "--per-cluster", "6", "--seed", "2", "--dim", "4", "--output", scene}).code, 0);
  const auto cfg = write("fw_cfg.json", R"({"head_count": 2})");
  const auto out = tmp("fw_out.json"), rep = tmp("fw_report.json");
  for (const bool no_gc : {false, true}) {
    std::vector<std::string> args = {"forward", "--input", scene, "--config", cfg, "--output", out, "--report", rep};
    if (no_gc)
      args.push_back("--no-gcpool");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = io::Json::parse(slurp(out));
    EXPECT_EQ(j["ids"].size(), 18u);
    EXPECT_EQ(j["features"][0].size(), 4u);
    const auto report = io::Json::parse(slurp(rep));
    EXPECT_EQ(report["output_digest"], io::digest(slurp(out)));
    EXPECT_TRUE(report["timing_ms"].is_object());
    EXPECT_EQ(report["config"]["head_count"], 2);
    if (!no_gc) {
      EXPECT_EQ(report["parts"], 3);
    }
  }
}

TEST(Cli, ParamsFileMustMatchFeatureDim) {
  const auto in = write("two_params.json", two_boxes);
  const auto cfg = write("params_cfg.json", "{}");
  const auto params = tmp("params3.json");
  ASSERT_EQ(run({"params", "init", "--dim", "3", "--output", params}).code, 0);
  // documents without stored features use 7-dim descriptors
  const auto r = run({"attend", "--input", in, "--config", cfg, "--params", params, "--output", tmp("att.json")});
  EXPECT_EQ(r.code, 1) << r.err;
  const auto params7 = tmp("params7.json");
  ASSERT_EQ(run({"params", "init", "--dim", "7", "--heads", "2", "--output", params7}).code, 0);
  EXPECT_EQ(run({"attend", "--input", in, "--config", cfg, "--params", params7, "--output", tmp("att.json")}).code, 0);
}

TEST(Cli, NonFiniteFeaturesAreNumericalFailure) {
  // values that overflow to infinity once squared in the normalization statistics
  const auto in = write("huge.json", R"({"image_id": "h", "width": 10, "height": 10, "proposals": [
      {"box": [0, 0, 5, 5], "feature": [1e308]}, {"box": [0, 0, 5, 5], "feature": [-1e308]},
      {"box": [0, 0, 5, 5], "feature": [1e308]}]})");
  const auto cfg = write("huge_cfg.json", R"({"head_count": 1})");
  const auto out = tmp("huge_out.json");
  fs::remove(out);
  const auto r = run({"forward", "--input", in, "--config", cfg, "--no-gcpool", "--output", out});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_FALSE(fs::exists(out));
}
