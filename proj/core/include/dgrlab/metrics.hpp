#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dgrlab::metrics {

// Correlations return std::nullopt for degenerate (constant) inputs.
std::optional<double> srcc(std::span<const double> predicted, std::span<const double> truth);
std::optional<double> plcc(std::span<const double> predicted, std::span<const double> truth);

// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct ClusteringScores {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
};

ClusteringScores clustering_metrics(std::span<const int> class_labels, std::span<const int> cluster_labels);

struct KMeansResult {
  std::vector<int> labels;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
};

// Lloyd iterations from k-means++ seeds; keeps the restart with the lowest
// inertia. Deterministic for a fixed seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, int restarts, std::uint64_t seed,
                    int max_iterations = 100);

}  // namespace dgrlab::metrics
