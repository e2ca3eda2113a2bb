#include <nlohmann/json.hpp>

#include "dgrlab/metrics.hpp"
#include "dgrlab/ops.hpp"
#include "dgrlab/train.hpp"

namespace dgrlab::train {

namespace {

constexpr std::uint64_t kHeldoutTag = 0x68656c64ULL;
constexpr std::uint64_t kProbeTag = 0x70726f62ULL;

// Splits [0, n) into graph-sized chunks; a trailing single sample joins the previous chunk.
std::vector<std::pair<std::size_t, std::size_t>> graph_chunks(std::size_t n, std::size_t graph_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t begin = 0; begin < n; begin += graph_size) out.emplace_back(begin, std::min(n, begin + graph_size));
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::vector<HeldoutImage> make_heldout_images(const TrainConfig& config) {
  Rng rng(synth::mix_seed(config.eval_seed, kHeldoutTag));
  const std::size_t types = config.types.size();
  std::vector<HeldoutImage> out;
  out.reserve(config.eval_samples);
  for (std::size_t i = 0; i < config.eval_samples; ++i) {
    const auto& spec = config.types[i % types];
    const int level = static_cast<int>((i / types) % synth::kLevels) + 1;
    const auto seed = synth::draw_content_seed(rng, synth::SeedSpace::heldout);
    auto sample = synth::make_sample(spec, level, seed, config.eval_image_size, config.eval_image_size, config.mos);
    out.push_back(HeldoutImage{std::move(sample.patch), spec.type_id, level, sample.proxy_mos, seed});
  }
  return out;
}

std::vector<std::vector<synth::DistortionSample>> make_probe_sets(const TrainConfig& config) {
  std::vector<std::vector<synth::DistortionSample>> out;
  for (const auto& spec : config.types) {
    Rng rng(synth::mix_seed(config.eval_seed, kProbeTag + static_cast<std::uint64_t>(spec.type_id)));
    std::vector<synth::DistortionSample> set;
    for (std::size_t i = 0; i < config.eval_per_type; ++i) {
      const int level = static_cast<int>(i % synth::kLevels) + 1;
      const auto seed = synth::draw_content_seed(rng, synth::SeedSpace::heldout);
      set.push_back(synth::make_sample(spec, level, seed, config.patch_size, config.patch_size, config.mos));
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<double> predict_scores(const DgrModel& model, const TrainConfig& config,
                                   std::span<const HeldoutImage> heldout) {
  std::vector<double> scores;
  scores.reserve(heldout.size());
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    Rng rng(synth::mix_seed(config.eval_seed, i));
    scores.push_back(infer_score(model, heldout[i].image, config.eval_crops, config.patch_size, rng));
  }
  return scores;
}

EvalReport evaluate(const DgrModel& model, const TrainConfig& config, std::span<const HeldoutImage> heldout,
                    std::size_t step) {
  if (heldout.empty()) throw std::invalid_argument("evaluate: empty held-out set");
  for (const auto& h : heldout) {
    if (synth::seed_space_of(h.content_seed) != synth::SeedSpace::heldout) {
      throw std::invalid_argument("evaluate: held-out sample uses a training content seed");
    }
  }
  ad::NoGradGuard no_grad;
  EvalReport report;
  report.step = step;

  const auto scores = predict_scores(model, config, heldout);
  std::vector<double> truth;
  truth.reserve(heldout.size());
  for (const auto& h : heldout) truth.push_back(h.proxy_mos);
  if (heldout.size() >= 2) {
    report.srcc = metrics::srcc(scores, truth);
    report.plcc = metrics::plcc(scores, truth);
  }

  const auto probes = make_probe_sets(config);
  for (std::size_t t = 0; t < probes.size(); ++t) {
    const auto& set = probes[t];
    std::vector<std::vector<double>> embeddings;
    std::vector<double> mu;
    std::vector<double> levels;
    std::vector<int> level_labels;
    for (const auto& [begin, end] : graph_chunks(set.size(), config.graph_size)) {
      const auto chunk = std::span(set).subspan(begin, end - begin);
      const auto dgr = model.build(chunk);
      const std::vector<double> zeros(chunk.size(), 0.0);
      const auto prediction = heads::fpn_predict(dgr, model.fpn, zeros);
      const std::size_t c = dgr.nodes.dim(1);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const auto row = dgr.nodes.data().subspan(i * c, c);
        embeddings.emplace_back(row.begin(), row.end());
        mu.push_back(prediction.mu[i]);
        levels.push_back(chunk[i].level);
        level_labels.push_back(chunk[i].level);
      }
    }
    const auto clusters = metrics::kmeans(embeddings, synth::kLevels, config.kmeans_restarts,
                                          synth::mix_seed(config.eval_seed, 0x6b6d ^ t));
    const auto scores3 = metrics::clustering_metrics(level_labels, clusters.labels);
    TypeReport tr;
    tr.type_id = config.types[t].type_id;
    tr.family = std::string(synth::family_name(config.types[t].family));
    tr.homogeneity = scores3.homogeneity;
    tr.completeness = scores3.completeness;
    tr.v_measure = scores3.v_measure;
    tr.level_spearman = metrics::srcc(mu, levels);
    report.per_type.push_back(std::move(tr));
  }
  return report;
}

EvalReport evaluate(const DgrModel& model, const TrainConfig& config, std::size_t step) {
  const auto heldout = make_heldout_images(config);
  return evaluate(model, config, heldout, step);
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["step"] = report.step;
  j["srcc"] = optional_number(report.srcc);
  j["plcc"] = optional_number(report.plcc);
  auto& per_type = j["per_type"] = nlohmann::json::array();
  for (const auto& t : report.per_type) {
    per_type.push_back({{"type_id", t.type_id},
                        {"family", t.family},
                        {"homogeneity", t.homogeneity},
                        {"completeness", t.completeness},
                        {"v_measure", t.v_measure},
                        {"level_spearman", optional_number(t.level_spearman)}});
  }
  return j.dump();
}

double triplet_accuracy(const DgrModel& model, const TrainConfig& config, std::size_t triplets, std::uint64_t seed) {
  if (triplets == 0) throw std::invalid_argument("triplet_accuracy: need at least one triplet");
  ad::NoGradGuard no_grad;
  Rng rng(seed);
  const auto options = config.sample_options(synth::SeedSpace::heldout);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < triplets; ++i) {
    const auto t = synth::sample_triplet(config.types, config.graph_size, rng, options);
    const auto a = heads::tdn_code(model.build(t.anchor), model.tdn);
    const auto p = heads::tdn_code(model.build(t.positive), model.tdn);
    const auto n = heads::tdn_code(model.build(t.negative), model.tdn);
    if (ad::squared_l2_distance(a, p).item() < ad::squared_l2_distance(a, n).item()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(triplets);
}

std::optional<double> linear_evaluation(const DgrModel& model, const TrainConfig& config, std::size_t batches,
                                        std::size_t steps) {
  std::vector<double> rows;
  std::vector<double> targets;
  std::size_t width = 0;
  {
    ad::NoGradGuard no_grad;
    Rng rng(synth::mix_seed(config.seed, 0x6c696e ^ 0x1ULL));
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = synth::sample_mixed_batch(config.types, config.graph_size, rng, config.sample_options());
      const auto x = heads::regressor_features(model.build(batch), model.regressor_input);
      width = x.dim(1);
      rows.insert(rows.end(), x.data().begin(), x.data().end());
      for (const auto& s : batch) targets.push_back(s.proxy_mos);
    }
  }
  const auto x = ad::Tensor::from({targets.size(), width}, rows);
  Rng init(synth::mix_seed(config.seed, 0x70726f6265ULL));
  auto probe = Linear::make(width, 1, init);
  probe.bias.mutable_data()[0] = config.mos.mean(0, 3);
  ad::ParameterList params;
  probe.collect("probe", params);
  ad::Adam optimizer(params, ad::AdamOptions{.learning_rate = 1e-2});
  for (std::size_t s = 0; s < steps; ++s) {
    auto pred = ad::reshape(probe.forward(x), {targets.size()});
    auto loss = heads::score_loss(pred, targets);
    optimizer.zero_grad();
    ad::backprop(loss);
    optimizer.step();
  }

  ad::NoGradGuard no_grad;
  const auto heldout = make_heldout_images(config);
  std::vector<double> predicted, truth;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    Rng rng(synth::mix_seed(config.eval_seed, i));
    std::uniform_int_distribution<std::size_t> pos(0, config.eval_image_size - config.patch_size);
    std::vector<synth::Image> crops;
    for (std::size_t c = 0; c < std::max<std::size_t>(2, config.eval_crops); ++c) {
      const auto y = pos(rng);
      const auto xx = pos(rng);
      crops.push_back(heldout[i].image.crop(y, xx, config.patch_size, config.patch_size));
    }
    const auto scores = probe.forward(heads::regressor_features(model.build(crops), model.regressor_input));
    double total = 0.0;
    for (double v : scores.data()) total += v;
    predicted.push_back(total / static_cast<double>(scores.numel()));
    truth.push_back(heldout[i].proxy_mos);
  }
  return metrics::srcc(predicted, truth);
}

}  // namespace dgrlab::train
