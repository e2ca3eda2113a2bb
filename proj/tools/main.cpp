#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using dgrlab::app::RunOptions;

  CLI::App app{"dgrlab: distortion graph representation learning for blind image quality assessment"};
  app.require_subcommand(1);

  RunOptions options;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = options.out.string();

  auto add_common = [&](CLI::App* sub, bool writes_output) {
    sub->add_option("--config", config_path, "INI config file; omitted keys take their defaults")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "run seed, overrides [run] seed");
    if (writes_output) sub->add_option("--out", out, "output directory")->capture_default_str();
    sub->add_flag("-q,--quiet", options.quiet, "no progress messages on stderr");
  };

  auto* pretrain = app.add_subcommand("pretrain", "pretrain DGRs with the triplet and level objectives");
  add_common(pretrain, true);

  auto* finetune = app.add_subcommand("finetune", "finetune the score regressor end to end");
  add_common(finetune, true);
  finetune->add_option("--from", options.from, "pretrained checkpoint, or 'random'")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; report JSON on stdout");
  add_common(eval, true);
  eval->add_option("--from", options.from, "checkpoint to evaluate")->required();

  auto* embeddings = app.add_subcommand("export-embeddings", "write node and edge CSVs per distortion type");
  add_common(embeddings, true);
  embeddings->add_option("--from", options.from, "checkpoint to load")->required();

  auto* dataset = app.add_subcommand("export-dataset", "write labelled synthetic patches as PNG plus CSV");
  add_common(dataset, true);
  dataset->add_option("--per-type", options.per_type, "patches per distortion type")->capture_default_str();

  auto* show = app.add_subcommand("show-config", "print the effective configuration");
  add_common(show, false);

  CLI11_PARSE(app, argc, argv);

  auto* chosen = app.get_subcommands().front();
  options.command = chosen->get_name();
  if (!config_path.empty()) options.config = config_path;
  if (chosen->count("--seed") > 0) options.seed = seed;
  options.out = out;
  return dgrlab::app::run_command(options, std::cout, std::cerr);
}
