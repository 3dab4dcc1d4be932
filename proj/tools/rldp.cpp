#include "rldp/rldp.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFlagged = 3;

int report_error(int code, const std::string& type, const std::string& message) {
  const rldp::json err = {{"error", {{"code", code}, {"type", type}, {"message", message}}}};
  std::cout << err.dump() << std::endl;
  std::cerr << "rldp: " << message << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflected mean-field particle systems: simulation, large-deviation estimates and diagnostics"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out_dir;
  for (const auto& kind : rldp::run_kinds()) {
    auto* sub = app.add_subcommand(kind, "run kind " + kind);
    sub->add_option("--config", config_path, "JSON scenario file")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--workers", workers, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kExitConfig, "usage", e.what());
  }
  const auto* sub = app.get_subcommands().front();
  const std::string kind = sub->get_name();

  rldp::json raw;
  try {
    raw = rldp::json::parse(rldp::read_text_file(config_path));
  } catch (const std::exception& e) {
    return report_error(kExitConfig, "config", std::string("cannot read config: ") + e.what());
  }
  if (!raw.is_object()) return report_error(kExitConfig, "config", "config must be a JSON object");

  // Run placement, not science: kept out of the hashed config.
  std::size_t file_workers = 1;
  std::string file_out = "rldp_out";
  if (raw.contains("workers")) {
    if (!raw["workers"].is_number_unsigned() || raw["workers"].get<std::size_t>() == 0)
      return report_error(kExitConfig, "config", "workers: expected a positive integer");
    file_workers = raw["workers"].get<std::size_t>();
    raw.erase("workers");
  }
  if (raw.contains("output_dir")) {
    if (!raw["output_dir"].is_string()) return report_error(kExitConfig, "config", "output_dir: expected a string");
    file_out = raw["output_dir"].get<std::string>();
    raw.erase("output_dir");
  }
  if (sub->count("--seed")) raw["seed"] = seed;
  if (!sub->count("--workers")) workers = file_workers;
  if (!sub->count("--out")) out_dir = file_out;

  rldp::Scenario scenario;
  try {
    scenario = rldp::parse_scenario(raw, kind);
  } catch (const rldp::InputError& e) {
    return report_error(kExitConfig, "config", e.what());
  }

  rldp::RunOutput output;
  try {
    output = rldp::run_scenario(scenario, workers);
  } catch (const rldp::InputError& e) {
    return report_error(kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return report_error(kExitFailure, "runtime", e.what());
  }

  try {
    const auto manifest = rldp::write_artifacts(out_dir, scenario, output, workers);
    std::cout << rldp::json({{"kind", kind},
                             {"out", out_dir},
                             {"result_hash", manifest["result_hash"]},
                             {"flags", output.flags}})
                     .dump()
              << std::endl;
  } catch (const std::exception& e) {
    return report_error(kExitFailure, "io", e.what());
  }
  return output.flags.empty() ? kExitOk : kExitFlagged;
}
