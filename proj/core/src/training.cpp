#include <cmath>

#include "dgrlab/ops.hpp"
#include "dgrlab/train.hpp"

namespace dgrlab::train {

heads::LossBundle pretrain_step(DgrModel& model, const TrainConfig& config, Rng& rng, ad::Adam& optimizer) {
  const auto triplet = synth::sample_triplet(config.types, config.graph_size, rng, config.sample_options());

  // Three forward passes through shared weights.
  const auto anchor = model.build(triplet.anchor);
  const auto positive = model.build(triplet.positive);
  const auto negative = model.build(triplet.negative);
  const heads::TripletCodes codes{heads::tdn_code(anchor, model.tdn), heads::tdn_code(positive, model.tdn),
                                  heads::tdn_code(negative, model.tdn)};
  const auto l_dist = heads::triplet_loss(codes, config.margin);

  const auto prediction = heads::fpn_predict(anchor, model.fpn, rng);
  std::vector<double> levels;
  levels.reserve(triplet.anchor.size());
  for (const auto& s : triplet.anchor) levels.push_back(static_cast<double>(s.level));
  const auto l_level = heads::level_loss(prediction, levels);

  if (!std::isfinite(l_dist.item()) || !std::isfinite(l_level.item())) {
    throw TrainingDiverged("non-finite pretraining loss at step " + std::to_string(optimizer.state().step + 1) +
                           " (l_dist=" + std::to_string(l_dist.item()) +
                           ", l_level=" + std::to_string(l_level.item()) + ")");
  }
  const auto loss = heads::combined_loss(l_dist, l_level, config.lambda);

  optimizer.zero_grad();
  ad::backprop(loss.total);
  optimizer.step();
  return loss.bundle;
}

double finetune_step(DgrModel& model, std::span<const synth::DistortionSample> batch, ad::Adam& optimizer) {
  const auto dgr = model.build(batch);
  const auto scores = heads::regression_score(dgr, model.regressor, model.regressor_input);
  std::vector<double> truth;
  truth.reserve(batch.size());
  for (const auto& s : batch) truth.push_back(s.proxy_mos);
  const auto loss = heads::score_loss(scores, truth);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw TrainingDiverged("non-finite finetuning loss at step " + std::to_string(optimizer.state().step + 1));
  }
  optimizer.zero_grad();
  ad::backprop(loss);
  optimizer.step();
  return value;
}

double infer_score(const DgrModel& model, const synth::Image& image, std::size_t crops, std::size_t patch_size,
                   Rng& rng) {
  if (image.height < patch_size || image.width < patch_size) {
    throw std::invalid_argument("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                " is smaller than the " + std::to_string(patch_size) + "px patch");
  }
  if (crops == 0) throw std::invalid_argument("infer_score needs at least one crop");
  std::uniform_int_distribution<std::size_t> top(0, image.height - patch_size), left(0, image.width - patch_size);
  std::vector<synth::Image> patches;
  patches.reserve(crops);
  for (std::size_t i = 0; i < crops; ++i) {
    const auto y = top(rng);
    const auto x = left(rng);
    patches.push_back(image.crop(y, x, patch_size, patch_size));
  }

  ad::NoGradGuard no_grad;
  auto features = model.features(patches);
  // A graph needs two nodes; a single crop is paired with itself.
  if (crops == 1) {
    const std::size_t twice[] = {0, 0};
    features = ad::gather_rows(features, twice);
  }
  const auto dgr = graph::build_dgr(features, model.node_builder, model.edge_builder);
  const auto scores = heads::regression_score(dgr, model.regressor, model.regressor_input);
  double total = 0.0;
  for (double s : scores.data()) total += s;
  return total / static_cast<double>(scores.numel());
}

ad::Adam make_pretrain_optimizer(const DgrModel& model, const TrainConfig& config) {
  return ad::Adam(model.pretrain_parameters(), ad::AdamOptions{.learning_rate = config.pretrain_lr});
}

ad::Adam make_finetune_optimizer(const DgrModel& model, const TrainConfig& config) {
  return ad::Adam(model.finetune_parameters(), ad::AdamOptions{.learning_rate = config.finetune_lr});
}

double cosine_learning_rate(double base, std::size_t step, std::size_t total) {
  constexpr double kFloor = 0.01;
  constexpr double kPi = 3.14159265358979323846;
  const double progress = total <= 1 ? 0.0 : static_cast<double>(step) / static_cast<double>(total - 1);
  return base * (kFloor + (1.0 - kFloor) * 0.5 * (1.0 + std::cos(kPi * std::min(progress, 1.0))));
}

std::vector<heads::LossBundle> run_pretraining(DgrModel& model, const TrainConfig& config,
                                               const PretrainObserver& observer) {
  config.validate();
  auto optimizer = make_pretrain_optimizer(model, config);
  Rng rng(synth::mix_seed(config.seed, 0x70726574ULL));
  std::vector<heads::LossBundle> history;
  history.reserve(config.pretrain_steps);
  for (std::size_t step = 1; step <= config.pretrain_steps; ++step) {
    if (config.pretrain_cosine)
      optimizer.set_learning_rate(cosine_learning_rate(config.pretrain_lr, step - 1, config.pretrain_steps));
    history.push_back(pretrain_step(model, config, rng, optimizer));
    if (observer) observer(step, history.back());
  }
  return history;
}

std::vector<double> run_finetuning(DgrModel& model, const TrainConfig& config, const FinetuneObserver& observer) {
  config.validate();
  auto optimizer = make_finetune_optimizer(model, config);
  Rng rng(synth::mix_seed(config.seed, 0x66696e65ULL));
  std::vector<double> history;
  history.reserve(config.finetune_steps);
  for (std::size_t step = 0; step < config.finetune_steps; ++step) {
    if (config.finetune_cosine)
      optimizer.set_learning_rate(cosine_learning_rate(config.finetune_lr, step, config.finetune_steps));
    const auto batch = synth::sample_mixed_batch(config.types, config.finetune_batch, rng, config.sample_options());
    history.push_back(finetune_step(model, batch, optimizer));
    if (observer) observer(step + 1, history.back());
  }
  return history;
}

}  // namespace dgrlab::train
