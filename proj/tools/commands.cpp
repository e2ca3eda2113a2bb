#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "config.hpp"
#include "dgrlab/ops.hpp"
#include "dgrlab/train.hpp"
#include "manifest.hpp"

namespace dgrlab::app {

namespace {

namespace fs = std::filesystem;
using train::TrainConfig;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string report_line(const train::EvalReport& report) {
  std::ostringstream line;
  line << std::fixed << std::setprecision(4) << "srcc=";
  if (report.srcc) line << *report.srcc; else line << "n/a";
  line << " plcc=";
  if (report.plcc) line << *report.plcc; else line << "n/a";
  return line.str();
}

struct Context {
  const RunOptions& options;
  LoadedConfig loaded;
  std::ostream& out;
  std::ostream& log;

  const TrainConfig& config() const { return loaded.config; }
  void note(const std::string& message) const {
    if (!options.quiet) log << message << std::endl;
  }
};

void finish_with_report(const Context& ctx, const train::EvalReport& report) {
  const auto json = train::to_json(report);
  write_text(ctx.options.out / "report.json", json + "\n");
  ctx.out << json << std::endl;
}

void cmd_pretrain(const Context& ctx) {
  const auto& config = ctx.config();
  auto model = train::DgrModel::create(config);
  const auto heldout = train::make_heldout_images(config);

  auto loss_log = open_output(ctx.options.out / "loss.csv");
  loss_log << "step,l_dist,l_level,total\n" << std::setprecision(17);

  std::optional<train::EvalReport> last;
  Stopwatch clock;
  train::run_pretraining(model, config, [&](std::size_t step, const heads::LossBundle& loss) {
    loss_log << step << ',' << loss.l_dist << ',' << loss.l_level << ',' << loss.total << '\n';
    if (config.eval_every > 0 && step % config.eval_every == 0) {
      loss_log.flush();
      last = train::evaluate(model, config, heldout, step);
      write_text(ctx.options.out / ("eval_step_" + std::to_string(step) + ".json"), train::to_json(*last) + "\n");
      std::ostringstream msg;
      msg << "pretrain step " << step << "/" << config.pretrain_steps << " total=" << std::setprecision(4)
          << loss.total << " (" << std::fixed << std::setprecision(1) << clock.seconds() << "s)";
      ctx.note(msg.str());
    }
  });
  if (!loss_log.flush()) throw std::runtime_error("cannot write loss log");

  train::save_checkpoint(model, config, (ctx.options.out / kCheckpointFile).string());
  if (!last || last->step != config.pretrain_steps) last = train::evaluate(model, config, heldout, config.pretrain_steps);
  finish_with_report(ctx, *last);
}

void cmd_finetune(const Context& ctx) {
  const auto& config = ctx.config();
  if (ctx.options.from.empty()) throw ConfigError("finetune needs --from PATH or --from random");
  auto model = train::DgrModel::create(config);
  if (ctx.options.from != "random") {
    const auto checkpoint = train::read_checkpoint(ctx.options.from);
    train::load_pretrained(model, checkpoint, config);
    ctx.note("loaded pretrained weights from " + ctx.options.from);
  } else {
    ctx.note("finetuning from random initialisation");
  }

  auto loss_log = open_output(ctx.options.out / "finetune_loss.csv");
  loss_log << "step,loss\n" << std::setprecision(17);
  Stopwatch clock;
  const std::size_t every = std::max<std::size_t>(1, config.finetune_steps / 5);
  train::run_finetuning(model, config, [&](std::size_t step, double loss) {
    loss_log << step << ',' << loss << '\n';
    if (step % every == 0 || step == config.finetune_steps) {
      std::ostringstream msg;
      msg << "finetune step " << step << "/" << config.finetune_steps << " mse=" << std::setprecision(4) << loss
          << " (" << std::fixed << std::setprecision(1) << clock.seconds() << "s)";
      ctx.note(msg.str());
    }
  });
  if (!loss_log.flush()) throw std::runtime_error("cannot write finetune loss log");

  train::save_checkpoint(model, config, (ctx.options.out / kCheckpointFile).string());
  const auto report = train::evaluate(model, config, config.finetune_steps);
  ctx.note("held-out " + report_line(report));
  finish_with_report(ctx, report);
}

train::DgrModel load_for_inference(const Context& ctx) {
  if (ctx.options.from.empty() || ctx.options.from == "random") {
    throw ConfigError(ctx.options.command + " needs --from PATH to a checkpoint");
  }
  return train::load_checkpoint(ctx.options.from, ctx.config());
}

void cmd_eval(const Context& ctx) {
  const auto model = load_for_inference(ctx);
  finish_with_report(ctx, train::evaluate(model, ctx.config()));
}

void cmd_export_embeddings(const Context& ctx) {
  const auto& config = ctx.config();
  const auto model = load_for_inference(ctx);
  ad::NoGradGuard no_grad;
  std::size_t files = 0;
  for (const auto& spec : config.types) {
    Rng rng(synth::mix_seed(config.eval_seed, 0x656d6265ULL + static_cast<std::uint64_t>(spec.type_id)));
    const auto batch =
        synth::sample_type_batch(spec, config.graph_size, rng, config.sample_options(synth::SeedSpace::heldout));
    const auto dgr = model.build(batch);
    std::vector<int> levels;
    for (const auto& s : batch) levels.push_back(s.level);

    const auto stem = "type" + std::to_string(spec.type_id) + "_" + std::string(synth::family_name(spec.family));
    auto nodes = open_output(ctx.options.out / (stem + "_nodes.csv"));
    graph::write_node_csv(nodes, dgr, levels);
    auto edges = open_output(ctx.options.out / (stem + "_edges.csv"));
    graph::write_edge_csv(edges, dgr);
    if (!nodes.flush() || !edges.flush()) throw std::runtime_error("cannot write embeddings for " + stem);
    files += 2;
  }
  ctx.note("wrote " + std::to_string(files) + " embedding files to " + ctx.options.out.string());
}

void cmd_export_dataset(const Context& ctx) {
  const auto& config = ctx.config();
  if (ctx.options.per_type < 2) throw ConfigError("export-dataset needs --per-type of at least 2");
  Rng rng(synth::mix_seed(config.seed, 0x64617461ULL));
  std::vector<synth::DistortionSample> samples;
  for (const auto& spec : config.types) {
    auto batch = synth::sample_type_batch(spec, ctx.options.per_type, rng, config.sample_options());
    samples.insert(samples.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  }
  synth::export_dataset(ctx.options.out / "dataset", samples);
  ctx.note("wrote " + std::to_string(samples.size()) + " patches to " + (ctx.options.out / "dataset").string());
}

}  // namespace

int run_command(const RunOptions& options, std::ostream& out, std::ostream& log) {
  LoadedConfig loaded;
  try {
    loaded = options.config ? load_config(*options.config) : default_config();
    if (options.seed) loaded.config.seed = *options.seed;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << std::endl;
    return kExitConfig;
  }

  if (options.command == "show-config") {
    out << render_config(loaded.config);
    return kExitOk;
  }

  const std::map<std::string, std::function<void(const Context&)>> commands = {
      {"pretrain", cmd_pretrain},
      {"finetune", cmd_finetune},
      {"eval", cmd_eval},
      {"export-embeddings", cmd_export_embeddings},
      {"export-dataset", cmd_export_dataset},
  };
  const auto command = commands.find(options.command);
  if (command == commands.end()) {
    log << "error: unknown command '" << options.command << "'" << std::endl;
    return kExitConfig;
  }

  std::optional<ManifestWriter> manifest;
  try {
    RunManifest m;
    m.command = options.command;
    m.config_path = loaded.path;
    m.seed = loaded.config.seed;
    m.config_hash = git_blob_hash(loaded.text);
    manifest.emplace(options.out, std::move(m));
  } catch (const std::exception& e) {
    log << "error: " << e.what() << std::endl;
    return kExitFailure;
  }

  const Context ctx{options, std::move(loaded), out, log};
  auto fail = [&](const std::exception& e, int code) {
    log << "error: " << e.what() << std::endl;
    try {
      manifest->fail(e.what());
    } catch (const std::exception& inner) {
      log << "error: " << inner.what() << std::endl;
    }
    return code;
  };
  try {
    command->second(ctx);
    manifest->complete();
    return kExitOk;
  } catch (const ConfigError& e) {
    return fail(e, kExitConfig);
  } catch (const train::CheckpointError& e) {
    return fail(e, kExitCheckpoint);
  } catch (const std::exception& e) {
    return fail(e, kExitFailure);
  }
}

}  // namespace dgrlab::app
