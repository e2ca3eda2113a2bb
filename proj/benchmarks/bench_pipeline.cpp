#include <benchmark/benchmark.h>

#include "dgrlab/train.hpp"

namespace {

using namespace dgrlab;

std::vector<synth::DistortionSample> batch_of(const train::TrainConfig& config, std::size_t n) {
  Rng rng(7);
  return synth::sample_mixed_batch(config.types, n, rng, config.sample_options());
}

void BM_BackboneForward(benchmark::State& state) {
  const train::TrainConfig config;
  const auto model = train::DgrModel::create(config);
  const auto batch = batch_of(config, static_cast<std::size_t>(state.range(0)));
  std::vector<synth::Image> patches;
  for (const auto& s : batch) patches.push_back(s.patch);
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.features(patches));
}
BENCHMARK(BM_BackboneForward)->Arg(10)->Arg(32)->Unit(benchmark::kMillisecond);

// Node builder, edge builder and node pooling on precomputed features.
void BM_BuildDgr(benchmark::State& state) {
  const train::TrainConfig config;
  const auto model = train::DgrModel::create(config);
  const auto batch = batch_of(config, static_cast<std::size_t>(state.range(0)));
  std::vector<synth::Image> patches;
  for (const auto& s : batch) patches.push_back(s.patch);
  ad::NoGradGuard no_grad;
  const auto features = model.features(patches);
  for (auto _ : state) benchmark::DoNotOptimize(graph::build_dgr(features, model.node_builder, model.edge_builder));
}
BENCHMARK(BM_BuildDgr)->Arg(10)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_PretrainStep(benchmark::State& state) {
  const train::TrainConfig config;
  auto model = train::DgrModel::create(config);
  auto optimizer = train::make_pretrain_optimizer(model, config);
  Rng rng(11);
  for (auto _ : state) benchmark::DoNotOptimize(train::pretrain_step(model, config, rng, optimizer));
}
BENCHMARK(BM_PretrainStep)->Unit(benchmark::kMillisecond);

void BM_FinetuneStep(benchmark::State& state) {
  const train::TrainConfig config;
  auto model = train::DgrModel::create(config);
  auto optimizer = train::make_finetune_optimizer(model, config);
  const auto batch = batch_of(config, config.finetune_batch);
  for (auto _ : state) benchmark::DoNotOptimize(train::finetune_step(model, batch, optimizer));
}
BENCHMARK(BM_FinetuneStep)->Unit(benchmark::kMillisecond);

void BM_InferScore(benchmark::State& state) {
  const train::TrainConfig config;
  const auto model = train::DgrModel::create(config);
  const auto image = synth::make_clean_patch(3, config.eval_image_size, config.eval_image_size);
  Rng rng(5);
  for (auto _ : state)
    benchmark::DoNotOptimize(train::infer_score(model, image, config.eval_crops, config.patch_size, rng));
}
BENCHMARK(BM_InferScore)->Unit(benchmark::kMillisecond);

}  // namespace
