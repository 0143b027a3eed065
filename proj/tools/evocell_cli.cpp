// Command line front end: search runs, architecture rendering, dataset
// generation, and seed baselines.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "evocell/evocell.hpp"

int main(int argc, char** argv) {
  CLI::App app{"evolutionary search over recurrent cell architectures"};
  app.require_subcommand(1);

  std::string config_path, out_path, arch_path;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t dataset_seed = 1;
  int count = 500, n_min = 1, n_max = 10;
  bool csv = false;

  auto* search = app.add_subcommand("search", "run a configured architecture search");
  search->add_option("--config", config_path, "run configuration JSON")->required();
  search->add_option("--out", out_path, "output directory for run artifacts")->required();
  search->add_option("--seed", seed_override, "override the config rng_seed");

  auto* render = app.add_subcommand("render", "render an architecture document to Graphviz DOT");
  render->add_option("arch", arch_path, "architecture JSON document")->required();
  render->add_option("--out", out_path, "output .dot path")->required();

  auto* dataset = app.add_subcommand("dataset", "generate counting-language strings");
  dataset->add_option("--count", count, "number of strings");
  dataset->add_option("--n-min", n_min, "minimum repeat count");
  dataset->add_option("--n-max", n_max, "maximum repeat count");
  dataset->add_option("--seed", dataset_seed, "generator seed");
  dataset->add_option("--out", out_path, "output directory")->required();

  auto* baselines = app.add_subcommand("baselines", "train and score the three seed cells");
  baselines->add_option("--config", config_path, "run configuration JSON")->required();
  baselines->add_flag("--csv", csv, "emit CSV instead of plain text");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*search) {
      evocell::cmd_search(config_path, out_path, seed_override, std::cout);
    } else if (*render) {
      evocell::cmd_render(arch_path, out_path);
    } else if (*dataset) {
      evocell::cmd_dataset(count, n_min, n_max, dataset_seed, out_path);
    } else if (*baselines) {
      evocell::cmd_baselines(config_path, csv, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
