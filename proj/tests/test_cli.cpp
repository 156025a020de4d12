#include "infoctrl/cli.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace infoctrl;
using infoctrl::io::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string err;
};

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "infoctrl_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

Result invoke(const std::string& args, const fs::path& out) {
  const auto err_file = out.string() + ".stderr";
  const std::string cmd = std::string(INFOCTRL_CLI_PATH) + " " + args + " --out " + out.string() + " 2> " + err_file;
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = io::read_file(err_file);
  return r;
}

std::vector<std::vector<double>> read_csv(const fs::path& path, std::vector<std::string>* header = nullptr) {
  std::istringstream in(io::read_file(path.string()));
  std::string line;
  std::getline(in, line);
  if (header) {
    std::istringstream h(line);
    for (std::string cell; std::getline(h, cell, ',');) header->push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::istringstream l(line);
    std::vector<double> row;
    for (std::string cell; std::getline(l, cell, ',');) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

void expect_manifest_covers(const fs::path& out) {
  const json manifest = json::parse(io::read_file((out / "manifest.json").string()));
  std::size_t listed = 0;
  for (const auto& a : manifest.at("artifacts")) {
    const auto file = out / a.at("file").get<std::string>();
    ASSERT_TRUE(fs::exists(file)) << file;
    EXPECT_EQ(a.at("sha256").get<std::string>(), io::sha256_hex(io::read_file(file.string())));
    ++listed;
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename() != "manifest.json") ++on_disk;
  EXPECT_EQ(listed, on_disk);
  EXPECT_TRUE(manifest.contains("versions"));
  EXPECT_TRUE(manifest.contains("tolerances"));
  EXPECT_EQ(manifest.at("input").at("sha256").get<std::string>(),
            io::sha256_hex(io::read_file(manifest.at("input").at("path").get<std::string>())));
}

}  // namespace

TEST(Grid, Parsing) {
  const auto g = cli::parse_grid("0:1:5");
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(cli::parse_grid("100:0.001:3").values(true).back(), 0.001);
  EXPECT_EQ(cli::parse_grid("2:3:1").values(), std::vector<double>{2.0});
  for (const char* bad : {"1:2", "a:1:2", "0:1:0", "0:1:2.5", "0:inf:3"})
    EXPECT_THROW(cli::parse_grid(bad), io::SchemaError) << bad;
}

TEST(Cli, DrfMatchesBinaryHammingCurve) {
  const auto out = fresh_dir("drf");
  const auto r = invoke("drf --config " + fixtures::data_path("binary_hamming.json") + " --grid 0:0.69:24", out);
  ASSERT_EQ(r.status, 0) << r.err;
  std::vector<std::string> header;
  const auto rows = read_csv(out / "drf.csv", &header);
  EXPECT_EQ(header, (std::vector<std::string>{"R_nats", "D", "s", "iterations", "dual_gap"}));
  ASSERT_EQ(rows.size(), 24u);
  for (const auto& row : rows) EXPECT_NEAR(row[1], oracle::hamming_distortion(row[0]), 1e-4) << "R=" << row[0];
  EXPECT_EQ(rows.front()[0], 0.0);
  EXPECT_NEAR(rows.front()[1], 0.5, 1e-12);
  expect_manifest_covers(out);
}

TEST(Cli, LqgReproducesDesign) {
  const auto out = fresh_dir("lqg");
  const auto r = invoke("lqg --config " + fixtures::data_path("lqg_near_unit.json") + " --grid 0:3:31", out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto prm = std::get<lqg::LqgParams>(fixtures::load("lqg_near_unit.json").model);
  const auto rows = read_csv(out / "lqg.csv");
  ASSERT_EQ(rows.size(), 31u);
  for (const auto& row : rows) {
    const auto d = lqg::design(prm, row[0]);
    const std::vector<double> expected{d.rate, d.m1, d.m2, d.k1, d.k2, d.s1sq, d.s2sq, d.lambda1, d.lambda2};
    for (std::size_t j = 0; j < expected.size(); ++j) {
      if (std::isnan(expected[j])) EXPECT_TRUE(std::isnan(row[j]));
      else EXPECT_EQ(row[j], expected[j]) << "R=" << row[0] << " column " << j;
    }
  }
  expect_manifest_covers(out);
}

TEST(Cli, IcbeAndDiscountedRun) {
  const auto icbe = fresh_dir("icbe");
  auto r = invoke("icbe --config " + fixtures::data_path("mdp_4x3.json") + " --grid 10:0.01:5", icbe);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rows = read_csv(icbe / "icbe.csv");
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i][0], rows[i - 1][0]);
    EXPECT_LE(rows[i][2], rows[i - 1][2] + 1e-9);
  }
  expect_manifest_covers(icbe);

  const auto disc = fresh_dir("discounted");
  r = invoke("discounted --config " + fixtures::data_path("mdp_2x2.json"), disc);
  ASSERT_EQ(r.status, 0) << r.err;
  const json manifest = json::parse(io::read_file((disc / "manifest.json").string()));
  EXPECT_TRUE(manifest.at("summary").at("info_within_budget").get<bool>());
  EXPECT_TRUE(manifest.at("summary").at("cost_within_bound").get<bool>());
  expect_manifest_covers(disc);
}

TEST(Cli, SimulateIsDeterministicPerSeed) {
  const std::string doc = fixtures::data_path("mdp_4x3.json");
  const auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b"), c = fresh_dir("sim_c");
  ASSERT_EQ(invoke("simulate --config " + doc + " --seed 42", a).status, 0);
  ASSERT_EQ(invoke("simulate --config " + doc + " --seed 42", b).status, 0);
  ASSERT_EQ(invoke("simulate --config " + doc + " --seed 43", c).status, 0);
  for (const char* f : {"simulate_summary.csv", "simulate_paths.csv", "info_trajectory.csv"}) {
    EXPECT_EQ(io::read_file((a / f).string()), io::read_file((b / f).string())) << f;
  }
  EXPECT_NE(io::read_file((a / "simulate_paths.csv").string()), io::read_file((c / "simulate_paths.csv").string()));
  expect_manifest_covers(a);
}

TEST(Cli, DrfIsByteIdenticalAcrossRuns) {
  const auto a = fresh_dir("drf_a"), b = fresh_dir("drf_b");
  const std::string args = "drf --config " + fixtures::data_path("binary_hamming.json");
  ASSERT_EQ(invoke(args, a).status, 0);
  ASSERT_EQ(invoke(args, b).status, 0);
  EXPECT_EQ(io::read_file((a / "drf.csv").string()), io::read_file((b / "drf.csv").string()));
}

TEST(Cli, MissingInputLeavesNoArtifacts) {
  const auto out = fresh_dir("missing");
  const auto r = invoke("drf --config " + (out.parent_path() / "nope.json").string(), out);
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(fs::exists(out));
  const json e = json::parse(r.err);
  EXPECT_EQ(e.at("error"), "input");
}

TEST(Cli, SchemaErrorsNameFields) {
  const auto dir = fresh_dir("schema");
  fs::create_directories(dir);
  const auto bad = dir / "bad.json";
  json doc = json::parse(io::read_file(fixtures::data_path("mdp_2x2.json")));
  doc["transitions"][1][0] = json::array({0.3, 0.6});
  std::ofstream(bad) << doc.dump();
  const auto out = dir / "out";
  const auto r = invoke("icbe --config " + bad.string(), out);
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(fs::exists(out));
  const json e = json::parse(r.err);
  EXPECT_EQ(e.at("error"), "schema");
  ASSERT_EQ(e.at("fields").size(), 1u);
  EXPECT_NE(e.at("fields")[0].get<std::string>().find("x=high, u=wait"), std::string::npos);
}

TEST(Cli, WrongDocumentTypeAndBadGrid) {
  const auto out = fresh_dir("wrong");
  auto r = invoke("lqg --config " + fixtures::data_path("mdp_2x2.json"), out);
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(json::parse(r.err).at("fields"), json::array({"type"}));
  r = invoke("icbe --config " + fixtures::data_path("mdp_2x2.json") + " --grid 0:1:3", out);
  EXPECT_EQ(r.status, 2);
  r = invoke("drf --config " + fixtures::data_path("binary_hamming.json") + " --tol -1", out);
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, UnstableLqgAboveThreshold) {
  const auto out = fresh_dir("unstable");
  const auto prm = std::get<lqg::LqgParams>(fixtures::load("lqg_unstable.json").model);
  const double thr = lqg::min_stabilizing_rate(prm);
  std::ostringstream grid;
  grid << io::format_double(thr * 1.01) << ":" << io::format_double(thr + 2.0) << ":4";
  const auto r = invoke("lqg --config " + fixtures::data_path("lqg_unstable.json") + " --grid " + grid.str(), out);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const auto& row : read_csv(out / "lqg.csv")) EXPECT_TRUE(std::isfinite(row[8]));
}
