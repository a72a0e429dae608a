#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memlab/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"memlab: adversarial training with memory of past adversarial examples"};
  app.require_subcommand(1);

  std::vector<std::string> overrides;
  std::string config, out_dir, checkpoint, pair, out_path;

  auto* train = app.add_subcommand("train", "train one run from a config file");
  train->add_option("config", config, "run config (JSON)")->required();
  train->add_option("-o,--out", out_dir, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "clean and robust accuracy of a checkpoint");
  eval->add_option("checkpoint", checkpoint, "network checkpoint")->required();
  eval->add_option("config", config, "run config (JSON)")->required();

  auto* sweep = app.add_subcommand("sweep", "beta / beta_mem trade-off sweep");
  sweep->add_option("config", config, "run config (JSON)")->required();
  sweep->add_option("-o,--out", out_dir, "output directory")->required();

  auto* forget = app.add_subcommand("forgetting", "accuracy drop on the previous epoch's adversarial examples");
  forget->add_option("config", config, "run config (JSON)")->required();
  forget->add_option("-o,--out", out_dir, "output directory")->required();
  forget->add_option("--pair", pair, "second config run on the same data");

  auto* plot = app.add_subcommand("plot-boundary", "decision-boundary raster (PPM) of a checkpoint");
  plot->add_option("checkpoint", checkpoint, "network checkpoint")->required();
  plot->add_option("config", config, "run config (JSON)")->required();
  plot->add_option("-o,--out", out_path, "output .ppm path")->required();

  for (auto* sub : {train, eval, sweep, forget, plot}) {
    sub->add_option("--set", overrides, "override a scalar field: section.key=value");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : memlab::kExitConfig;
  }

  if (*train) return memlab::cmd_train(config, out_dir, overrides);
  if (*eval) return memlab::cmd_eval(checkpoint, config, overrides);
  if (*sweep) return memlab::cmd_sweep(config, out_dir, overrides);
  if (*forget) {
    std::optional<std::filesystem::path> paired;
    if (!pair.empty()) paired = pair;
    return memlab::cmd_forgetting(config, out_dir, paired, overrides);
  }
  return memlab::cmd_plot_boundary(checkpoint, config, out_path, overrides);
}
