#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dwgf/cli.hpp"

int main(int argc, char **argv) {
  CLI::App app{"Particle flow posterior sampler with an analytic latent prior"};
  app.require_subcommand(1);

  std::string config;
  auto *run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", config, "config file (JSON, comments allowed)")
      ->required();

  std::string suite;
  auto *verify = app.add_subcommand("verify", "run a built-in property suite");
  verify->add_option("suite", suite, "gradients | theorem1 | fixedpoint | reparam")
      ->required();

  std::string param, values;
  auto *sweep = app.add_subcommand(
      "sweep", "run a config once per parameter value into subdirectories");
  sweep->add_option("config", config, "config file")->required();
  sweep->add_option("--param", param, "parameter name, e.g. gamma or flow.N")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  app.footer(std::string("Environment: ") + dwgf::cli::kOutputDirEnv +
             " overrides output.directory.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dwgf::cli::usage;
  }

  if (*run)
    return dwgf::cli::cmd_run(config);
  if (*verify)
    return dwgf::cli::cmd_verify(suite);
  return dwgf::cli::cmd_sweep(config, param, dwgf::cli::split_values(values));
}
