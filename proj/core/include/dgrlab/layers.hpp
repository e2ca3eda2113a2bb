#pragma once

// Trainable building blocks shared by the backbone, graph builders, and heads.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dgrlab/optim.hpp"
#include "dgrlab/tensor.hpp"

namespace dgrlab {

using Rng = std::mt19937_64;

// He (fan-in) normal initialisation.
ad::Tensor he_normal(ad::Shape shape, std::size_t fan_in, Rng& rng);

struct Linear {
  ad::Tensor weight;  // [in, out]
  ad::Tensor bias;    // [out]

  static Linear make(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ad::ParameterList& out) const;
};

// Fully-connected stack with ReLU between layers and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp make(const std::vector<std::size_t>& widths, Rng& rng);
  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ad::ParameterList& out) const;
};

// Graph convolution layers H <- act(A_hat H W). No bias.
struct GcnStack {
  std::vector<ad::Tensor> weights;  // weights[l] is [width_l, width_{l+1}]

  static GcnStack make(const std::vector<std::size_t>& widths, Rng& rng);
  std::size_t layer_count() const { return weights.size(); }
  std::size_t in_features() const { return weights.front().dim(0); }
  std::size_t out_features() const { return weights.back().dim(1); }
  // relu_on_last=false leaves the final layer linear.
  ad::Tensor forward(const ad::Tensor& normalized_adjacency, const ad::Tensor& x,
                     bool relu_on_last) const;
  void collect(const std::string& prefix, ad::ParameterList& out) const;
};

}  // namespace dgrlab
