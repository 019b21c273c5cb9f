#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcasgd/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pcasgd: delay-tolerant decentralized SGD simulator"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  auto* run = app.add_subcommand("run", "run every configured variant and seed");
  run->add_option("config", config, "config file or preset name")->required();
  run->add_option("--seed", seed, "run a single seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--override,-O", overrides, "section.key=value");

  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "grid over tau, theta or variant");
  sweep->add_option("config", config, "config file or preset name")->required();
  sweep->add_option("--axis", axis, "tau | theta | variant")->required();
  sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--override,-O", overrides, "section.key=value");

  auto* validate = app.add_subcommand("validate", "check mixing matrices of a config");
  validate->add_option("config", config, "config file or preset name")->required();
  validate->add_option("--override,-O", overrides, "section.key=value");

  std::string trace;
  auto* bounds = app.add_subcommand("bounds", "bound report for a recorded trace");
  bounds->add_option("trace", trace, "trace CSV (its .steps.csv sibling is read too)")->required();
  bounds->add_option("config", config, "config file or preset name")->required();
  bounds->add_option("--override,-O", overrides, "section.key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pcasgd::exit_code::config_error;
  }

  if (*run) return pcasgd::cli_run({config, seed, out, overrides}, std::cout, std::cerr);
  if (*sweep) {
    pcasgd::SweepRequest req{config, axis, values, out, overrides, pcasgd::threads_from_env()};
    return pcasgd::cli_sweep(req, std::cout, std::cerr);
  }
  if (*validate) return pcasgd::cli_validate(config, overrides, std::cout, std::cerr);
  return pcasgd::cli_bounds(trace, config, overrides, std::cout, std::cerr);
}
