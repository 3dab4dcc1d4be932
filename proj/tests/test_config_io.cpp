#include "rldp/config.hpp"
#include "rldp/io.hpp"
#include "rldp/scenario.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <random>
#include <set>

using namespace rldp;

namespace {

json base(const std::string& kind) {
  json j = json::parse(R"({
    "schema_version": 1,
    "seed": 4,
    "grid": {"horizon": 1.0, "n_steps": 8},
    "model": {"name": "zero_drift", "domain": {"kind": "box", "lo": [0.0], "hi": [1.0]}}
  })");
  j["kind"] = kind;
  return j;
}

std::string config_error(const json& raw, const std::string& kind) {
  try {
    parse_scenario(raw, kind);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::vector<std::filesystem::path> shipped_configs() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(RLDP_CONFIG_DIR))
    if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 eng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 10000; ++i) {
    double x;
    const std::uint64_t b = bits(eng);
    std::memcpy(&x, &b, sizeof x);
    if (!std::isfinite(x)) continue;
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Csv, QuotingAndLineEndings) {
  CsvTable t("demo", {"a", "b"});
  t.add_row({"1", "x,y"});
  t.add_row({"say \"hi\"", "line\nbreak"});
  EXPECT_EQ(t.text(), "a,b\r\n1,\"x,y\"\r\n\"say \"\"hi\"\"\",\"line\nbreak\"\r\n");
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_THROW(t.add_row({"only one"}), InputError);
}

TEST(ContentHash, MatchesGitBlobIds) {
  EXPECT_EQ(content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(ParseScenario, FillsDefaults) {
  const auto sc = parse_scenario(base("simulate"), "simulate");
  EXPECT_EQ(sc.simulate.N, 8u);
  EXPECT_EQ(sc.resolved["simulate"]["N"], 8);
  EXPECT_EQ(sc.resolved["model"]["sigma"], 1.0);
  EXPECT_EQ(sc.resolved["model"]["init"]["kind"], "uniform");
  EXPECT_EQ(sc.resolved["budgets"]["optimizer_evaluations"], 60);
  EXPECT_EQ(sc.grid.steps(), 8u);
  EXPECT_EQ(sc.seed, 4u);

  const auto sm = parse_scenario(base("submartingale"), "submartingale");
  EXPECT_EQ(sm.submartingale.function, "neg_sq_x1");
  EXPECT_EQ(sm.resolved["submartingale"]["time_pairs"], json::parse("[[0.25,0.5],[0.5,1.0]]"));
}

TEST(ParseScenario, ResolvedConfigReparsesToItself) {
  for (const auto& kind : run_kinds()) {
    const auto sc = parse_scenario(base(kind), kind);
    EXPECT_EQ(parse_scenario(sc.resolved, kind).resolved, sc.resolved) << kind;
  }
  for (const auto& path : shipped_configs()) {
    const json raw = json::parse(read_text_file(path));
    const auto sc = parse_scenario(raw, raw.at("kind"));
    EXPECT_EQ(parse_scenario(sc.resolved, raw.at("kind")).resolved, sc.resolved) << path;
  }
}

TEST(ParseScenario, RejectsBadInput) {
  auto raw = base("simulate");
  raw["model"]["colour"] = "blue";
  EXPECT_NE(config_error(raw, "simulate").find("model.colour"), std::string::npos);

  raw = base("simulate");
  raw["model"]["name"] = "nope";
  EXPECT_NE(config_error(raw, "simulate").find("model.name"), std::string::npos);

  raw = base("simulate");
  raw["schema_version"] = 2;
  EXPECT_NE(config_error(raw, "simulate").find("schema_version"), std::string::npos);

  raw = base("simulate");
  EXPECT_NE(config_error(raw, "laplace").find("kind"), std::string::npos);

  raw = base("laplace");
  raw["simulate"] = json::object();
  EXPECT_NE(config_error(raw, "laplace").find("simulate"), std::string::npos);

  raw = base("laplace");
  raw["laplace"] = {{"M", 1}};
  EXPECT_NE(config_error(raw, "laplace").find("laplace.M"), std::string::npos);

  raw = base("simulate");
  raw["grid"]["n_steps"] = -3;
  EXPECT_NE(config_error(raw, "simulate").find("grid.n_steps"), std::string::npos);

  raw = base("simulate");
  raw["model"]["init"] = {{"kind", "point"}, {"x", {1.5}}};
  EXPECT_FALSE(config_error(raw, "simulate").empty());

  raw = base("rate");
  raw["rate"] = {{"lambda_schedule", {2.0, 1.0}}};
  EXPECT_NE(config_error(raw, "rate").find("lambda_schedule"), std::string::npos);

  raw = base("submartingale");
  raw["submartingale"] = {{"time_pairs", {{0.5, 0.25}}}};
  EXPECT_NE(config_error(raw, "submartingale").find("time_pairs"), std::string::npos);

  raw = base("submartingale");
  raw["submartingale"] = {{"function", "x1"}};
  EXPECT_TRUE(config_error(raw, "submartingale").empty());

  raw = base("chaos");
  raw["chaos"] = {{"reference", {{"method", "large_N"}, {"n_ref", 100}}}};
  EXPECT_NE(config_error(raw, "chaos").find("n_ref"), std::string::npos);

  EXPECT_THROW(parse_scenario(base("simulate"), "bogus"), ConfigError);
  EXPECT_THROW(parse_scenario(json::array(), "simulate"), ConfigError);
}

TEST(RunScenario, WorkerCountDoesNotChangeResults) {
  for (const auto& path : shipped_configs()) {
    const json raw = json::parse(read_text_file(path));
    const auto sc = parse_scenario(raw, raw.at("kind"));
    const auto a = run_scenario(sc, 1);
    const auto b = run_scenario(sc, 3);
    EXPECT_EQ(canonical_json(a.result), canonical_json(b.result)) << path;
    ASSERT_EQ(a.tables.size(), b.tables.size());
    for (std::size_t t = 0; t < a.tables.size(); ++t) EXPECT_EQ(a.tables[t].text(), b.tables[t].text()) << path;
  }
}

TEST(RunScenario, BudgetExhaustionIsFlaggedPartialResult) {
  auto raw = base("simulate");
  raw["budgets"] = {{"particle_steps", 10}};
  const auto out = run_scenario(parse_scenario(raw, "simulate"), 1);
  EXPECT_EQ(out.flags, std::vector<std::string>{"particle_step_budget"});
  EXPECT_TRUE(out.result["partial"].get<bool>());
}

TEST(WriteArtifacts, ManifestListsEveryFile) {
  const auto dir = std::filesystem::temp_directory_path() / "rldp_artifacts_test";
  std::filesystem::remove_all(dir);
  const auto sc = parse_scenario(base("simulate"), "simulate");
  const auto out = run_scenario(sc, 1);
  const json manifest = write_artifacts(dir, sc, out, 2);
  std::set<std::string> listed;
  for (const auto& f : manifest["files"]) {
    listed.insert(f["path"].get<std::string>());
    const auto text = read_text_file(dir / f["path"].get<std::string>());
    EXPECT_EQ(content_hash(text), f["hash"]);
    EXPECT_EQ(text.size(), f["bytes"]);
  }
  std::set<std::string> present;
  for (const auto& e : std::filesystem::directory_iterator(dir)) present.insert(e.path().filename().string());
  present.erase("manifest.json");
  EXPECT_EQ(listed, present);
  EXPECT_EQ(manifest["workers"], 2);
  EXPECT_EQ(parse_scenario(manifest["config"], "simulate").resolved, manifest["config"]);
  EXPECT_EQ(manifest["config_hash"], content_hash(canonical_json(sc.resolved)));
  std::filesystem::remove_all(dir);
}
