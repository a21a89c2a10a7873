#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wsqp/run.hpp"

namespace {

int cmd_run(const std::string& path, std::optional<long long> seed, std::optional<std::string> out) {
  wsqp::json raw = wsqp::read_json_file(path);
  if (seed && raw.is_object()) raw["seed"] = *seed;
  if (out && raw.is_object()) raw["out"] = *out;
  const wsqp::RunConfig cfg = wsqp::load_config(raw);
  return wsqp::run(cfg, cfg.string("out"), std::cout);
}

int cmd_validate(const std::string& path) {
  wsqp::json report = {{"config", path}, {"issues", wsqp::json::array()}};
  try {
    for (const wsqp::ConfigIssue& i : wsqp::validate_config(wsqp::read_json_file(path)))
      report["issues"].push_back({{"key", i.key}, {"reason", i.reason}});
  } catch (const std::exception& e) {
    report["issues"].push_back({{"key", ""}, {"reason", e.what()}});
  }
  report["valid"] = report["issues"].empty();
  std::cout << report.dump(2) << "\n";
  return report["valid"].get<bool>() ? 0 : wsqp::kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SQP full waveform inversion with box constraints, and its theory lab"};
  app.require_subcommand(1);

  std::string run_path;
  std::optional<long long> seed;
  std::optional<std::string> out;
  CLI::App* run = app.add_subcommand("run", "run the mode selected by the configuration");
  run->add_option("config", run_path, "JSON configuration")->required();
  run->add_option("--seed", seed, "override the configured RNG seed");
  run->add_option("--out", out, "override the configured output directory");

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "check a configuration without solving");
  validate->add_option("config", validate_path, "JSON configuration")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_path, seed, out);
    return cmd_validate(validate_path);
  } catch (const wsqp::InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wsqp::kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wsqp::kExitCheckFailed;
  }
}
