#include <sstream>

#include "dgrlab/ops.hpp"
#include "dgrlab/train.hpp"

namespace dgrlab::train {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid config value for '" + field + "': " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(types.size() >= 1, "types", "at least one distortion type is required");
  for (std::size_t i = 0; i < types.size(); ++i)
    require(types[i].type_id == static_cast<int>(i), "types", "type ids must follow list order");
  require(patch_size >= 8, "patch_size", "must be at least 8");
  require(graph_size >= 2, "graph_size", "a graph needs at least 2 nodes");
  require(!backbone.channels.empty(), "backbone_channels", "need at least one stage");
  require(backbone.feature_dim > 0, "feature_dim", "must be positive");
  require(edge_dim > 0 && edge_dim < backbone.feature_dim, "edge_dim", "must be positive and below feature_dim");
  require(code_dim > 0, "code_dim", "must be positive");
  require(node_builder_layers >= 1, "node_builder_layers", "must be positive");
  require(edge_builder_layers >= 1, "edge_builder_layers", "must be positive");
  require(tdn_layers >= 1, "tdn_layers", "must be positive");
  require(fpn_hidden > 0, "fpn_hidden", "must be positive");
  require(head_hidden > 0, "head_hidden", "must be positive");
  require(pretrain_steps > 0, "pretrain_steps", "must be positive");
  require(pretrain_lr > 0.0, "pretrain_lr", "must be positive");
  require(finetune_steps > 0, "finetune_steps", "must be positive");
  require(finetune_lr > 0.0, "finetune_lr", "must be positive");
  require(finetune_batch >= 2, "finetune_batch", "a graph needs at least 2 nodes");
  require(lambda >= 0.0, "lambda", "must be nonnegative");
  require(margin >= 0.0, "margin", "must be nonnegative");
  require(eval_samples >= 2, "eval_samples", "need at least 2 held-out samples");
  require(eval_crops >= 1, "eval_crops", "must be positive");
  require(eval_image_size >= patch_size, "eval_image_size", "must be at least patch_size");
  require(eval_per_type >= 5, "eval_per_type", "need at least one sample per level");
  require(kmeans_restarts >= 1, "kmeans_restarts", "must be positive");
  mos.validate();
}

synth::SampleOptions TrainConfig::sample_options(synth::SeedSpace space) const {
  return synth::SampleOptions{patch_size, mos, space};
}

std::string TrainConfig::fingerprint() const {
  std::ostringstream out;
  out << "format=dgrlab-1;C=" << backbone.feature_dim << ";C_E=" << edge_dim << ";C_V=" << code_dim
      << ";backbone=";
  for (std::size_t i = 0; i < backbone.channels.size(); ++i) out << (i ? "," : "") << backbone.channels[i];
  out << ";kernel=" << backbone.kernel << ";nb_layers=" << node_builder_layers << ";eb_layers=" << edge_builder_layers
      << ";tdn_layers=" << tdn_layers << ";fpn_hidden=" << fpn_hidden << ";head_hidden=" << head_hidden
      << ";head_input=" << regressor_input_name(regressor_input);
  return out.str();
}

std::string_view regressor_input_name(heads::RegressorInput input) {
  switch (input) {
    case heads::RegressorInput::nodes_and_edges: return "nodes+edges";
    case heads::RegressorInput::nodes_only: return "nodes";
    case heads::RegressorInput::edges_only: return "edges";
  }
  return "unknown";
}

heads::RegressorInput parse_regressor_input(std::string_view name) {
  if (name == "nodes+edges" || name == "both") return heads::RegressorInput::nodes_and_edges;
  if (name == "nodes") return heads::RegressorInput::nodes_only;
  if (name == "edges") return heads::RegressorInput::edges_only;
  throw std::invalid_argument("unknown regressor input '" + std::string(name) + "'");
}

DgrModel DgrModel::create(const TrainConfig& config) {
  config.validate();
  Rng rng(synth::mix_seed(config.seed, 0x6d6f64656cULL));
  const std::size_t c = config.feature_dim(), ce = config.edge_dim, cv = config.code_dim;

  DgrModel m;
  m.regressor_input = config.regressor_input;
  m.backbone = backbone::Backbone(config.backbone, rng);

  m.node_builder = Mlp::make(std::vector<std::size_t>(config.node_builder_layers + 1, c), rng);

  std::vector<std::size_t> eb{c};
  for (std::size_t l = 1; l < config.edge_builder_layers; ++l) eb.push_back(l == 1 ? (c + ce) / 2 : ce);
  eb.push_back(ce);
  m.edge_builder = GcnStack::make(eb, rng);

  std::vector<std::size_t> tdn{c};
  for (std::size_t l = 0; l < config.tdn_layers; ++l) tdn.push_back(cv);
  m.tdn = GcnStack::make(tdn, rng);

  m.fpn = Mlp::make({c + ce, config.fpn_hidden, 2}, rng);
  // Start the level mean mid-scale.
  m.fpn.layers.back().bias.mutable_data()[0] = 3.0;

  const auto in = heads::regressor_input_width(config.regressor_input, c, ce);
  m.regressor = Mlp::make({in, config.head_hidden, 1}, rng);
  m.regressor.layers.back().bias.mutable_data()[0] = config.mos.mean(0, 3);
  return m;
}

DgrModel DgrModel::clone(const TrainConfig& config) const {
  auto copy = DgrModel::create(config);
  auto dst = copy.parameters();
  const auto src = parameters();
  if (dst.size() != src.size()) throw std::invalid_argument("clone: config does not describe this model");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw std::invalid_argument("clone: parameter '" + src[i].name + "' does not match config");
    }
    const auto values = src[i].tensor.data();
    std::copy(values.begin(), values.end(), dst[i].tensor.mutable_data().begin());
  }
  return copy;
}

ad::ParameterList DgrModel::parameters() const {
  ad::ParameterList out = pretrain_parameters();
  regressor.collect("regressor", out);
  return out;
}

ad::ParameterList DgrModel::pretrain_parameters() const {
  ad::ParameterList out;
  backbone.collect("backbone", out);
  node_builder.collect("node_builder", out);
  edge_builder.collect("edge_builder", out);
  tdn.collect("tdn", out);
  fpn.collect("fpn", out);
  return out;
}

ad::ParameterList DgrModel::finetune_parameters() const {
  ad::ParameterList out;
  backbone.collect("backbone", out);
  node_builder.collect("node_builder", out);
  edge_builder.collect("edge_builder", out);
  regressor.collect("regressor", out);
  return out;
}

ad::ParameterList DgrModel::regressor_parameters() const {
  ad::ParameterList out;
  regressor.collect("regressor", out);
  return out;
}

ad::Tensor DgrModel::features(std::span<const synth::Image> patches) const {
  return backbone.forward(backbone::to_tensor(patches));
}

graph::Dgr DgrModel::build(std::span<const synth::Image> patches, int type_id) const {
  return graph::build_dgr(features(patches), node_builder, edge_builder, type_id);
}

graph::Dgr DgrModel::build(std::span<const synth::DistortionSample> samples) const {
  std::vector<synth::Image> patches;
  patches.reserve(samples.size());
  for (const auto& s : samples) patches.push_back(s.patch);
  const int type_id = samples.empty() ? -1 : samples.front().type_id;
  return build(patches, type_id);
}

}  // namespace dgrlab::train
