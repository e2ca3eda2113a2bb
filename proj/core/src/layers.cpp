#include "dgrlab/layers.hpp"

#include <cmath>

#include "dgrlab/ops.hpp"

namespace dgrlab {

ad::Tensor he_normal(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> values(ad::element_count(shape));
  for (auto& v : values) v = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(values), true);
}

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{he_normal({in, out}, in, rng), ad::Tensor::zeros({out}, true)};
}

ad::Tensor Linear::forward(const ad::Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features()) {
    throw ad::ShapeError("linear layer expects [*, " + std::to_string(in_features()) + "], got " +
                         ad::to_string(x.shape()));
  }
  return ad::add_bias(ad::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, ad::ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Mlp Mlp::make(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least an input and output width");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) mlp.layers.push_back(Linear::make(widths[l], widths[l + 1], rng));
  return mlp;
}

ad::Tensor Mlp::forward(const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h);
    if (l + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ad::ParameterList& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(prefix + ".fc" + std::to_string(l), out);
}

GcnStack GcnStack::make(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("GcnStack needs at least an input and output width");
  GcnStack stack;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    stack.weights.push_back(he_normal({widths[l], widths[l + 1]}, widths[l], rng));
  return stack;
}

ad::Tensor GcnStack::forward(const ad::Tensor& normalized_adjacency, const ad::Tensor& x,
                             bool relu_on_last) const {
  if (x.rank() != 2 || x.dim(1) != in_features()) {
    throw ad::ShapeError("GCN stack expects [*, " + std::to_string(in_features()) + "], got " +
                         ad::to_string(x.shape()));
  }
  ad::Tensor h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = ad::matmul(normalized_adjacency, ad::matmul(h, weights[l]));
    if (l + 1 < weights.size() || relu_on_last) h = ad::relu(h);
  }
  return h;
}

void GcnStack::collect(const std::string& prefix, ad::ParameterList& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) out.push_back({prefix + ".gcn" + std::to_string(l), weights[l]});
}

}  // namespace dgrlab
