#include "rldp/config.hpp"
#include "rldp/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

using namespace rldp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

Run rldp_cli(const std::string& args) {
  const std::string cmd = std::string(RLDP_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rldp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config(const std::string& file) { return std::string(RLDP_CONFIG_DIR) + "/" + file; }

json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  write_text_file(p, j.dump(2));
  return p;
}

// RFC 4180 record splitting for unquoted numeric tables.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find("\r\n", pos);
    if (end == std::string::npos) break;
    std::vector<std::string> fields;
    std::string line = text.substr(pos, end - pos), field;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(field);
        field.clear();
      } else {
        field += c;
      }
    }
    fields.push_back(field);
    rows.push_back(fields);
    pos = end + 2;
  }
  return rows;
}

}  // namespace

TEST(Cli, SimulateWritesOneRowPerParticlePerNode) {
  const auto dir = scratch("simulate");
  const auto r = rldp_cli("simulate --config " + config("simulate_m1.json") + " --out " + dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto text = read_text_file(dir / "paths.csv");
  const auto rows = parse_csv(text);
  ASSERT_EQ(rows.size(), 1u + 8u * 17u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"replica", "i", "k", "t", "x1", "local_time"}));
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t j = 1; j < rows.size(); ++j) {
    ASSERT_EQ(rows[j].size(), 6u);
    seen.insert({rows[j][1], rows[j][2]});
    const double x = std::stod(rows[j][4]);
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_EQ(seen.size(), 8u * 17u);
  EXPECT_EQ(text.substr(text.size() - 2), "\r\n");
}

TEST(Cli, LaplaceConstantFunctionalIsExact) {
  const auto dir = scratch("laplace");
  const auto r = rldp_cli("laplace --config " + config("laplace_constant.json") + " --out " + dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const json res = read_json(dir / "result.json");
  EXPECT_EQ(res["laplace"]["value"].get<double>(), 0.3);
  EXPECT_EQ(res["laplace"]["std_error"].get<double>(), 0.0);
}

TEST(Cli, EveryKindIsDeterministicAndManifestIsComplete) {
  for (const auto& kind : run_kinds()) {
    fs::path cfg;
    for (const auto& e : fs::directory_iterator(RLDP_CONFIG_DIR))
      if (e.path().filename().string().rfind(kind + "_", 0) == 0) cfg = e.path();
    ASSERT_FALSE(cfg.empty()) << kind;
    const auto a = scratch(kind + "_a"), b = scratch(kind + "_b"), c = scratch(kind + "_c");
    ASSERT_EQ(rldp_cli(kind + " --config " + cfg.string() + " --out " + a.string()).exit_code, 0) << kind;
    ASSERT_EQ(rldp_cli(kind + " --config " + cfg.string() + " --out " + b.string()).exit_code, 0) << kind;
    ASSERT_EQ(rldp_cli(kind + " --config " + cfg.string() + " --workers 4 --out " + c.string()).exit_code, 0)
        << kind;
    const auto result = read_text_file(a / "result.json");
    EXPECT_EQ(result, read_text_file(b / "result.json")) << kind;
    EXPECT_EQ(result, read_text_file(c / "result.json")) << kind;

    const json manifest = read_json(a / "manifest.json");
    EXPECT_EQ(manifest["result_hash"], content_hash(result));
    std::set<std::string> listed, present;
    for (const auto& f : manifest["files"]) {
      listed.insert(f["path"].get<std::string>());
      EXPECT_EQ(content_hash(read_text_file(a / f["path"].get<std::string>())), f["hash"]);
    }
    for (const auto& e : fs::directory_iterator(a))
      if (e.path().filename() != "manifest.json") present.insert(e.path().filename().string());
    EXPECT_EQ(listed, present) << kind;

    // The resolved config validates and reproduces the run.
    EXPECT_EQ(parse_scenario(manifest["config"], kind).resolved, manifest["config"]);
    const auto d = scratch(kind + "_d");
    const auto replay = write_config(d, manifest["config"]);
    ASSERT_EQ(rldp_cli(kind + " --config " + replay.string() + " --out " + (d / "out").string()).exit_code, 0);
    EXPECT_EQ(read_text_file(d / "out" / "result.json"), result) << kind;
  }
}

TEST(Cli, FlagsOverrideFile) {
  const auto dir = scratch("flags");
  json j = json::parse(read_text_file(config("simulate_m1.json")));
  j["output_dir"] = (dir / "from_file").string();
  j["workers"] = 2;
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(rldp_cli("simulate --config " + cfg.string()).exit_code, 0);
  const json m1 = read_json(dir / "from_file" / "manifest.json");
  EXPECT_EQ(m1["workers"], 2);
  EXPECT_EQ(m1["seed"], 1);
  EXPECT_FALSE(m1["config"].contains("workers"));
  EXPECT_FALSE(m1["config"].contains("output_dir"));

  ASSERT_EQ(rldp_cli("simulate --config " + cfg.string() + " --seed 2 --workers 1 --out " + (dir / "flag").string())
                .exit_code,
            0);
  const json m2 = read_json(dir / "flag" / "manifest.json");
  EXPECT_EQ(m2["seed"], 2);
  EXPECT_EQ(m2["config"]["seed"], 2);
  EXPECT_EQ(m2["workers"], 1);
  EXPECT_NE(m2["result_hash"], m1["result_hash"]);
}

TEST(Cli, ConfigErrorsExitTwoWithJson) {
  const auto dir = scratch("errors");
  json j = json::parse(read_text_file(config("simulate_m1.json")));
  j["model"]["typo"] = 1;
  const auto bad = write_config(dir, j);
  auto r = rldp_cli("simulate --config " + bad.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.exit_code, 2);
  const json err = json::parse(r.out);
  EXPECT_EQ(err["error"]["code"], 2);
  EXPECT_NE(err["error"]["message"].get<std::string>().find("model.typo"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o"));

  EXPECT_EQ(rldp_cli("simulate --config " + (dir / "missing.json").string()).exit_code, 2);
  EXPECT_EQ(rldp_cli("laplace --config " + config("simulate_m1.json") + " --out " + (dir / "o").string()).exit_code,
            2);
  EXPECT_EQ(rldp_cli("simulate").exit_code, 2);
  EXPECT_EQ(rldp_cli("simulate --config " + config("simulate_m1.json") + " --workers 0").exit_code, 2);
  write_text_file(dir / "broken.json", "{ not json");
  EXPECT_EQ(rldp_cli("simulate --config " + (dir / "broken.json").string()).exit_code, 2);
}

TEST(Cli, BudgetExhaustionExitsThreeWithPartialResult) {
  const auto dir = scratch("budget");
  json j = json::parse(read_text_file(config("simulate_m1.json")));
  j["budgets"] = {{"particle_steps", 50}};
  const auto cfg = write_config(dir, j);
  const auto r = rldp_cli("simulate --config " + cfg.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.exit_code, 3);
  const json res = read_json(dir / "o" / "result.json");
  EXPECT_TRUE(res["partial"].get<bool>());
  EXPECT_EQ(res["flags"], json::array({"particle_step_budget"}));
  EXPECT_EQ(read_json(dir / "o" / "manifest.json")["flags"], res["flags"]);
}
