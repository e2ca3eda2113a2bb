#include "dgrlab/backbone.hpp"

#include "dgrlab/ops.hpp"

namespace dgrlab::backbone {

Backbone::Backbone(const BackboneConfig& config, Rng& rng) {
  if (config.channels.empty()) throw std::invalid_argument("backbone needs at least one conv stage");
  std::size_t in = 3;
  for (auto out : config.channels) {
    const std::size_t fan_in = in * config.kernel * config.kernel;
    stages_.push_back(ConvStage{he_normal({out, in, config.kernel, config.kernel}, fan_in, rng),
                                ad::Tensor::zeros({out}, true)});
    in = out;
  }
  head_ = Linear::make(in, config.feature_dim, rng);
}

ad::Tensor Backbone::forward(const ad::Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ad::ShapeError("backbone expects [N, 3, H, W], got " + ad::to_string(images.shape()));
  }
  ad::Tensor h = images;
  for (const auto& stage : stages_) h = ad::avg_pool2(ad::relu(ad::conv2d(h, stage.weight, stage.bias)));
  const std::size_t n = h.dim(0), c = h.dim(1);
  h = ad::mean_over_axis(ad::reshape(h, {n, c, h.dim(2) * h.dim(3)}), 2);
  return head_.forward(h);
}

void Backbone::collect(const std::string& prefix, ad::ParameterList& out) const {
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    out.push_back({prefix + ".conv" + std::to_string(s) + ".weight", stages_[s].weight});
    out.push_back({prefix + ".conv" + std::to_string(s) + ".bias", stages_[s].bias});
  }
  head_.collect(prefix + ".proj", out);
}

ad::Tensor to_tensor(std::span<const synth::Image> patches) {
  if (patches.empty()) throw ad::ShapeError("empty patch batch");
  const std::size_t h = patches.front().height, w = patches.front().width;
  std::vector<double> values(patches.size() * 3 * h * w);
  for (std::size_t n = 0; n < patches.size(); ++n) {
    const auto& p = patches[n];
    if (p.height != h || p.width != w) {
      throw ad::ShapeError("ragged patch batch: " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                           " vs " + std::to_string(h) + "x" + std::to_string(w));
    }
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) values[((n * 3 + c) * h + y) * w + x] = p.at(y, x, c);
  }
  return ad::Tensor::from({patches.size(), 3, h, w}, std::move(values));
}

ad::Tensor to_tensor(std::span<const synth::DistortionSample> samples) {
  std::vector<synth::Image> patches;
  patches.reserve(samples.size());
  for (const auto& s : samples) patches.push_back(s.patch);
  return to_tensor(patches);
}

}  // namespace dgrlab::backbone
