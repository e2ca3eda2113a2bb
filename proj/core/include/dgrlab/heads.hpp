#pragma once

// Pretraining heads (type discrimination, fuzzy level prediction), the
// finetune score regressor, and their losses.

#include <cstddef>
#include <span>

#include "dgrlab/dgr.hpp"
#include "dgrlab/layers.hpp"

namespace dgrlab::heads {

struct TripletCodes {
  ad::Tensor anchor;    // [C_V]
  ad::Tensor positive;  // [C_V]
  ad::Tensor negative;  // [C_V]
};

struct LevelPrediction {
  ad::Tensor mu;       // [N]
  ad::Tensor sigma;    // [N], > 0
  ad::Tensor y;        // [N], mu + sigma * epsilon
  ad::Tensor epsilon;  // [N], constant
};

struct LossBundle {
  double l_dist = 0.0;
  double l_level = 0.0;
  double lambda = 0.25;
  double total = 0.0;
};

// Recorded total loss together with its scalar breakdown.
struct CombinedLoss {
  ad::Tensor total;
  LossBundle bundle;
};

inline constexpr double kSigmaFloor = 1e-4;

// GCN over nodes with A_hat = normalize(A_V), every layer ReLU, then the
// mean over nodes.
ad::Tensor tdn_code(const graph::Dgr& dgr, const GcnStack& stack);

// max(|a-p|^2 - |a-n|^2 + margin, 0)
ad::Tensor triplet_loss(const TripletCodes& codes, double margin);

// Hyper-predictor input [v_i || edge_pooling(E)_i].
ad::Tensor fpn_input(const graph::Dgr& dgr);

LevelPrediction fpn_predict(const graph::Dgr& dgr, const Mlp& hyper, Rng& rng);
// Deterministic variant with caller-provided standard-normal draws.
LevelPrediction fpn_predict(const graph::Dgr& dgr, const Mlp& hyper, std::span<const double> epsilon);
// Reparameterised sample from explicit (mu, pre-softplus scale) columns.
LevelPrediction reparameterize(const ad::Tensor& mu, const ad::Tensor& raw_scale, std::span<const double> epsilon);

// Sum of squared errors against integer level targets.
ad::Tensor level_loss(const LevelPrediction& prediction, std::span<const double> targets);

CombinedLoss combined_loss(const ad::Tensor& l_dist, const ad::Tensor& l_level, double lambda = 0.25);
LossBundle combined_loss(double l_dist, double l_level, double lambda = 0.25);

enum class RegressorInput { nodes_and_edges, nodes_only, edges_only };

std::size_t regressor_input_width(RegressorInput input, std::size_t node_dim, std::size_t edge_dim);
ad::Tensor regressor_features(const graph::Dgr& dgr, RegressorInput input);

// One score per node from [v_i || e_{i,i}] (or the selected subset).
ad::Tensor regression_score(const graph::Dgr& dgr, const Mlp& head,
                            RegressorInput input = RegressorInput::nodes_and_edges);

// Mean squared error.
ad::Tensor score_loss(const ad::Tensor& predicted, std::span<const double> target);

}  // namespace dgrlab::heads
