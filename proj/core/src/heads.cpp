#include "dgrlab/heads.hpp"

#include <cmath>
#include <random>

#include "dgrlab/ops.hpp"

namespace dgrlab::heads {

ad::Tensor tdn_code(const graph::Dgr& dgr, const GcnStack& stack) {
  if (stack.in_features() != dgr.nodes.dim(1)) {
    throw ad::ShapeError("TDN expects node width " + std::to_string(stack.in_features()) + ", got " +
                         std::to_string(dgr.nodes.dim(1)));
  }
  auto adjacency = ad::normalize_adjacency(dgr.node_adjacency);
  auto h = stack.forward(adjacency, dgr.nodes, /*relu_on_last=*/true);
  return ad::mean_over_axis(h, 0);
}

ad::Tensor triplet_loss(const TripletCodes& codes, double margin) {
  if (margin < 0.0) throw std::invalid_argument("triplet margin must be nonnegative");
  auto d_pos = ad::squared_l2_distance(codes.anchor, codes.positive);
  auto d_neg = ad::squared_l2_distance(codes.anchor, codes.negative);
  return ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin));
}

ad::Tensor fpn_input(const graph::Dgr& dgr) {
  return ad::concat_cols(dgr.nodes, graph::edge_pooling(dgr.edges));
}

LevelPrediction reparameterize(const ad::Tensor& mu, const ad::Tensor& raw_scale, std::span<const double> epsilon) {
  if (mu.shape() != raw_scale.shape() || mu.numel() != epsilon.size()) {
    throw ad::ShapeError("reparameterize: mu " + ad::to_string(mu.shape()) + ", scale " +
                         ad::to_string(raw_scale.shape()) + ", epsilon length " + std::to_string(epsilon.size()));
  }
  LevelPrediction out;
  out.mu = mu;
  out.sigma = ad::add_scalar(ad::softplus(raw_scale), kSigmaFloor);
  out.epsilon = ad::Tensor::from(mu.shape(), std::vector<double>(epsilon.begin(), epsilon.end()));
  out.y = ad::add(mu, ad::mul(out.sigma, out.epsilon));
  return out;
}

LevelPrediction fpn_predict(const graph::Dgr& dgr, const Mlp& hyper, std::span<const double> epsilon) {
  if (hyper.out_features() != 2) throw ad::ShapeError("FPN hyper predictor must emit (mu, scale) per node");
  auto params = hyper.forward(fpn_input(dgr));
  const std::size_t n = params.dim(0);
  auto mu = ad::reshape(ad::slice_cols(params, 0, 1), {n});
  auto raw = ad::reshape(ad::slice_cols(params, 1, 2), {n});
  return reparameterize(mu, raw, epsilon);
}

LevelPrediction fpn_predict(const graph::Dgr& dgr, const Mlp& hyper, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> epsilon(dgr.size());
  for (auto& e : epsilon) e = normal(rng);
  return fpn_predict(dgr, hyper, epsilon);
}

ad::Tensor level_loss(const LevelPrediction& prediction, std::span<const double> targets) {
  if (prediction.y.numel() != targets.size()) {
    throw ad::ShapeError("level_loss: " + std::to_string(prediction.y.numel()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  auto t = ad::Tensor::from(prediction.y.shape(), std::vector<double>(targets.begin(), targets.end()));
  auto diff = ad::sub(prediction.y, t);
  return ad::sum(ad::mul(diff, diff));
}

LossBundle combined_loss(double l_dist, double l_level, double lambda) {
  if (l_dist < 0.0 || l_level < 0.0 || lambda < 0.0) {
    throw std::invalid_argument("combined_loss: losses and weight must be nonnegative");
  }
  return LossBundle{l_dist, l_level, lambda, l_dist + lambda * l_level};
}

CombinedLoss combined_loss(const ad::Tensor& l_dist, const ad::Tensor& l_level, double lambda) {
  auto bundle = combined_loss(l_dist.item(), l_level.item(), lambda);
  auto total = ad::add(l_dist, ad::scale(l_level, lambda));
  return CombinedLoss{total, bundle};
}

std::size_t regressor_input_width(RegressorInput input, std::size_t node_dim, std::size_t edge_dim) {
  switch (input) {
    case RegressorInput::nodes_and_edges: return node_dim + edge_dim;
    case RegressorInput::nodes_only: return node_dim;
    case RegressorInput::edges_only: return edge_dim;
  }
  return 0;
}

ad::Tensor regressor_features(const graph::Dgr& dgr, RegressorInput input) {
  switch (input) {
    case RegressorInput::nodes_and_edges:
      return ad::concat_cols(dgr.nodes, graph::self_loop_edges(dgr.edges));
    case RegressorInput::nodes_only: return dgr.nodes;
    case RegressorInput::edges_only: return graph::self_loop_edges(dgr.edges);
  }
  throw std::invalid_argument("unknown regressor input");
}

ad::Tensor regression_score(const graph::Dgr& dgr, const Mlp& head, RegressorInput input) {
  if (head.out_features() != 1) throw ad::ShapeError("score regressor must emit one value per node");
  auto scores = head.forward(regressor_features(dgr, input));
  return ad::reshape(scores, {scores.dim(0)});
}

ad::Tensor score_loss(const ad::Tensor& predicted, std::span<const double> target) {
  if (predicted.numel() != target.size()) {
    throw ad::ShapeError("score_loss: " + std::to_string(predicted.numel()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
  }
  auto t = ad::Tensor::from(predicted.shape(), std::vector<double>(target.begin(), target.end()));
  auto diff = ad::sub(predicted, t);
  return ad::mean(ad::mul(diff, diff));
}

}  // namespace dgrlab::heads
