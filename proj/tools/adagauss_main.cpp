#include <string>

#include <CLI11.hpp>

#include "adagauss/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"AdaGauss: class-incremental learning with adapted Gaussian memories"};
  app.require_subcommand(1);

  std::string config_path;
  std::string artifact_dir;
  adagauss::CommandOptions options;

  CLI::App* run = app.add_subcommand("run", "execute the runs described by a config file");
  run->add_option("config", config_path, "path to the run config")->required();
  run->add_option("--out", options.out_dir_override, "output directory (overrides the config)");
  run->add_flag("--overwrite", options.overwrite, "replace existing artifacts");
  run->add_flag("--oracle-diagnostics", options.oracle_diagnostics,
                "enable evaluation-time diagnostics that re-estimate old classes from held-out data");

  CLI::App* ablate = app.add_subcommand("ablate", "execute the Cartesian ablation grid");
  ablate->add_option("config", config_path, "path to the grid config")->required();
  ablate->add_option("--out", options.out_dir_override, "output directory (overrides the config)");
  ablate->add_flag("--overwrite", options.overwrite, "replace existing artifacts");

  CLI::App* diagnose = app.add_subcommand("diagnose", "emit diagnostic CSVs from saved checkpoints");
  diagnose->add_option("dir", artifact_dir, "artifact directory of a checkpointed run")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return adagauss::cmd_run(config_path, options);
  if (ablate->parsed()) return adagauss::cmd_ablate(config_path, options);
  return adagauss::cmd_diagnose(artifact_dir);
}
