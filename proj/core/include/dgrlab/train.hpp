#pragma once

// Model assembly, pretraining and finetuning loops, inference, and
// evaluation against held-out synthetic data.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgrlab/backbone.hpp"
#include "dgrlab/dgr.hpp"
#include "dgrlab/heads.hpp"
#include "dgrlab/optim.hpp"
#include "dgrlab/synth.hpp"

namespace dgrlab::train {

struct TrainConfig {
  std::uint64_t seed = 1;

  // data
  std::vector<synth::DistortionSpec> types = synth::default_catalog();
  std::size_t patch_size = 32;
  synth::MosModel mos;

  // model
  backbone::BackboneConfig backbone;  // feature_dim is C
  std::size_t graph_size = 10;        // N
  std::size_t edge_dim = 16;          // C_E
  std::size_t code_dim = 32;          // C_V
  std::size_t node_builder_layers = 3;
  std::size_t edge_builder_layers = 3;
  std::size_t tdn_layers = 3;
  std::size_t fpn_hidden = 32;
  std::size_t head_hidden = 32;
  heads::RegressorInput regressor_input = heads::RegressorInput::nodes_and_edges;

  // pretraining
  std::size_t pretrain_steps = 2000;
  double pretrain_lr = 1e-3;
  bool pretrain_cosine = false;
  double lambda = 0.25;
  double margin = 0.1;
  std::size_t eval_every = 500;  // 0 disables periodic evaluation

  // finetuning
  std::size_t finetune_steps = 500;
  double finetune_lr = 1e-3;
  bool finetune_cosine = true;     // anneal to a small floor over the run
  std::size_t finetune_batch = 32;  // labelled samples per step, one graph

  // evaluation
  std::size_t eval_samples = 200;
  std::size_t eval_crops = 10;
  std::size_t eval_image_size = 48;
  std::size_t eval_per_type = 50;
  std::uint64_t eval_seed = 20240601;
  int kmeans_restarts = 10;

  std::size_t feature_dim() const { return backbone.feature_dim; }
  void validate() const;  // throws std::invalid_argument naming the field
  synth::SampleOptions sample_options(synth::SeedSpace space = synth::SeedSpace::training) const;

  // Architecture description recorded in checkpoints, as `key=value;...`.
  std::string fingerprint() const;
};

std::string_view regressor_input_name(heads::RegressorInput input);
heads::RegressorInput parse_regressor_input(std::string_view name);

struct DgrModel {
  backbone::Backbone backbone;
  Mlp node_builder;
  GcnStack edge_builder;
  GcnStack tdn;
  Mlp fpn;
  Mlp regressor;
  heads::RegressorInput regressor_input = heads::RegressorInput::nodes_and_edges;

  static DgrModel create(const TrainConfig& config);
  // Copies share parameter storage; clone() does not.
  DgrModel clone(const TrainConfig& config) const;

  ad::ParameterList parameters() const;           // everything, checkpoint order
  ad::ParameterList pretrain_parameters() const;  // backbone, NB, EB, TDN, FPN
  ad::ParameterList finetune_parameters() const;  // backbone, NB, EB, regressor
  ad::ParameterList regressor_parameters() const;

  ad::Tensor features(std::span<const synth::Image> patches) const;
  graph::Dgr build(std::span<const synth::Image> patches, int type_id = -1) const;
  graph::Dgr build(std::span<const synth::DistortionSample> samples) const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One triplet-plus-level update over all pretraining parameters.
heads::LossBundle pretrain_step(DgrModel& model, const TrainConfig& config, Rng& rng, ad::Adam& optimizer);

// One score-regression update on a labelled batch. Returns the MSE.
double finetune_step(DgrModel& model, std::span<const synth::DistortionSample> batch, ad::Adam& optimizer);

// Mean regression score over random crops of the image, taken as one graph.
double infer_score(const DgrModel& model, const synth::Image& image, std::size_t crops, std::size_t patch_size,
                   Rng& rng);

ad::Adam make_pretrain_optimizer(const DgrModel& model, const TrainConfig& config);
ad::Adam make_finetune_optimizer(const DgrModel& model, const TrainConfig& config);

using PretrainObserver = std::function<void(std::size_t step, const heads::LossBundle&)>;
std::vector<heads::LossBundle> run_pretraining(DgrModel& model, const TrainConfig& config,
                                               const PretrainObserver& observer = {});
// Cosine annealing from base to 1% of base over total steps; step is 0-based.
double cosine_learning_rate(double base, std::size_t step, std::size_t total);

using FinetuneObserver = std::function<void(std::size_t step, double loss)>;
std::vector<double> run_finetuning(DgrModel& model, const TrainConfig& config, const FinetuneObserver& observer = {});

struct HeldoutImage {
  synth::Image image;
  int type_id = 0;
  int level = 1;
  double proxy_mos = 0.0;
  std::uint64_t content_seed = 0;
};

// eval_samples images of eval_image_size, types and levels balanced.
std::vector<HeldoutImage> make_heldout_images(const TrainConfig& config);
// eval_per_type patches per type, levels balanced, held-out seeds.
std::vector<std::vector<synth::DistortionSample>> make_probe_sets(const TrainConfig& config);

struct TypeReport {
  int type_id = 0;
  std::string family;
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
  std::optional<double> level_spearman;  // FPN mean vs true level
};

struct EvalReport {
  std::size_t step = 0;
  std::optional<double> srcc;
  std::optional<double> plcc;
  std::vector<TypeReport> per_type;
};

EvalReport evaluate(const DgrModel& model, const TrainConfig& config, std::span<const HeldoutImage> heldout,
                    std::size_t step = 0);
EvalReport evaluate(const DgrModel& model, const TrainConfig& config, std::size_t step = 0);
std::string to_json(const EvalReport& report);

// Scores for every held-out image, in order.
std::vector<double> predict_scores(const DgrModel& model, const TrainConfig& config,
                                   std::span<const HeldoutImage> heldout);

// Fraction of fresh held-out triplets whose anchor code is closer to the
// positive code than to the negative code.
double triplet_accuracy(const DgrModel& model, const TrainConfig& config, std::size_t triplets, std::uint64_t seed);

// Linear probe on frozen regressor features; returns held-out SRCC.
std::optional<double> linear_evaluation(const DgrModel& model, const TrainConfig& config, std::size_t batches = 60,
                                        std::size_t steps = 400);

// Checkpoint: "DGR1", u32 fingerprint length + UTF-8 fingerprint, then per
// parameter: u32 name length, name, u32 rank, u64 dims, float64 values (LE).
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointRecord {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string fingerprint;
  std::vector<CheckpointRecord> records;
};

void save_checkpoint(const DgrModel& model, const TrainConfig& config, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
// Builds a model for config and fills every parameter from the file.
DgrModel load_checkpoint(const std::string& path, const TrainConfig& config);
// Copies backbone, builders, TDN and FPN weights; the regressor keeps its init.
void load_pretrained(DgrModel& model, const Checkpoint& checkpoint, const TrainConfig& config);

// First differing `key=value` entry between two fingerprints, if any.
std::optional<std::string> fingerprint_mismatch(const std::string& expected, const std::string& actual,
                                                bool ignore_regressor);

}  // namespace dgrlab::train
