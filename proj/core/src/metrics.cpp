#include "dgrlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace dgrlab::metrics {

namespace {

void check_pair(const char* name, std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument(std::string(name) + ": length mismatch " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
  if (a < 2) throw std::invalid_argument(std::string(name) + ": need at least 2 observations");
}

double entropy(const std::map<int, double>& counts, double total) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> plcc(std::span<const double> predicted, std::span<const double> truth) {
  check_pair("plcc", predicted.size(), truth.size());
  const double n = static_cast<double>(predicted.size());
  const double mp = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double dx = predicted[i] - mp, dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> srcc(std::span<const double> predicted, std::span<const double> truth) {
  check_pair("srcc", predicted.size(), truth.size());
  const auto rp = average_ranks(predicted);
  const auto rt = average_ranks(truth);
  return plcc(rp, rt);
}

ClusteringScores clustering_metrics(std::span<const int> class_labels, std::span<const int> cluster_labels) {
  if (class_labels.size() != cluster_labels.size()) {
    throw std::invalid_argument("clustering_metrics: length mismatch " + std::to_string(class_labels.size()) +
                                " vs " + std::to_string(cluster_labels.size()));
  }
  if (class_labels.empty()) throw std::invalid_argument("clustering_metrics: empty input");
  const double n = static_cast<double>(class_labels.size());
  std::map<int, double> classes, clusters;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    classes[class_labels[i]] += 1.0;
    clusters[cluster_labels[i]] += 1.0;
    joint[{class_labels[i], cluster_labels[i]}] += 1.0;
  }
  const double h_class = entropy(classes, n);
  const double h_cluster = entropy(clusters, n);
  double h_class_given_cluster = 0.0, h_cluster_given_class = 0.0;
  for (const auto& [key, c] : joint) {
    h_class_given_cluster -= (c / n) * std::log(c / clusters[key.second]);
    h_cluster_given_class -= (c / n) * std::log(c / classes[key.first]);
  }
  ClusteringScores s;
  s.homogeneity = h_class == 0.0 ? 1.0 : std::clamp(1.0 - h_class_given_cluster / h_class, 0.0, 1.0);
  s.completeness = h_cluster == 0.0 ? 1.0 : std::clamp(1.0 - h_cluster_given_class / h_cluster, 0.0, 1.0);
  const double denom = s.homogeneity + s.completeness;
  s.v_measure = denom == 0.0 ? 0.0 : 2.0 * s.homogeneity * s.completeness / denom;
  return s;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, int restarts, std::uint64_t seed,
                    int max_iterations) {
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (k < 1 || static_cast<std::size_t>(k) > points.size()) {
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " invalid for " + std::to_string(points.size()) +
                                " points");
  }
  const std::size_t n = points.size(), dim = points.front().size();
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, restarts); ++restart) {
    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (centroids.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = std::min(nearest[i], squared_distance(points[i], centroids.back()));
        total += nearest[i];
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (pick = 0; pick + 1 < n; ++pick) {
          r -= nearest[pick];
          if (r < 0.0) break;
        }
      } else {
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
      centroids.push_back(points[pick]);
    }

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = squared_distance(points[i], centroids[0]);
        for (int c = 1; c < k; ++c) {
          const double d = squared_distance(points[i], centroids[static_cast<std::size_t>(c)]);
          if (d < bestd) {
            bestd = d;
            arg = c;
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
      std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < n; ++i) {
        auto& s = sums[static_cast<std::size_t>(labels[i])];
        for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
        ++counts[static_cast<std::size_t>(labels[i])];
      }
      for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its centroid
        for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += squared_distance(points[i], centroids[static_cast<std::size_t>(labels[i])]);
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centroids = centroids;
    }
  }
  return best;
}

}  // namespace dgrlab::metrics
