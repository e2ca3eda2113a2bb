#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dgrlab/layers.hpp"
#include "dgrlab/synth.hpp"

namespace dgrlab::backbone {

struct BackboneConfig {
  std::vector<std::size_t> channels{16, 32, 32, 32};  // one conv stage each
  std::size_t feature_dim = 64;                      // C
  std::size_t kernel = 3;
};

struct ConvStage {
  ad::Tensor weight;  // [Cout, Cin, K, K]
  ad::Tensor bias;    // [Cout]
};

// conv -> ReLU -> 2x2 average pool per stage, then global average pooling
// and a linear projection to feature_dim.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, Rng& rng);

  // images: [N, 3, H, W] -> features [N, C]
  ad::Tensor forward(const ad::Tensor& images) const;
  std::size_t feature_dim() const { return head_.out_features(); }
  void collect(const std::string& prefix, ad::ParameterList& out) const;

 private:
  std::vector<ConvStage> stages_;
  Linear head_;
};

// Packs same-sized patches into an [N, 3, H, W] tensor.
ad::Tensor to_tensor(std::span<const synth::Image> patches);
ad::Tensor to_tensor(std::span<const synth::DistortionSample> samples);

}  // namespace dgrlab::backbone
