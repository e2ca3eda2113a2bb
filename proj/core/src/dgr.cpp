#include "dgrlab/dgr.hpp"

#include <iomanip>
#include <map>
#include <memory>
#include <mutex>

#include "dgrlab/ops.hpp"

namespace dgrlab::graph {

namespace {

void require_edge_tensor(const char* op, const ad::Tensor& edges) {
  if (edges.rank() != 3 || edges.dim(0) != edges.dim(1)) {
    throw ad::ShapeError(std::string(op) + ": expected [N, N, C], got " + ad::to_string(edges.shape()));
  }
}

}  // namespace

ad::Tensor build_nodes(const ad::Tensor& features, const Mlp& node_builder) {
  if (node_builder.in_features() != node_builder.out_features()) {
    throw ad::ShapeError("node builder must map C to C, got " + std::to_string(node_builder.in_features()) +
                         " -> " + std::to_string(node_builder.out_features()));
  }
  return node_builder.forward(features);
}

ad::Tensor init_edges(const ad::Tensor& nodes) {
  if (nodes.rank() != 2) throw ad::ShapeError("init_edges: expected [N, C], got " + ad::to_string(nodes.shape()));
  const std::size_t n = nodes.dim(0), c = nodes.dim(1);
  std::vector<std::size_t> left(n * n), right(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      left[i * n + j] = i;
      right[i * n + j] = j;
    }
  auto product = ad::mul(ad::gather_rows(nodes, left), ad::gather_rows(nodes, right));
  return ad::reshape(product, {n, n, c});
}

std::vector<double> line_graph_adjacency(std::size_t n) {
  const std::size_t m = n * n;
  std::vector<double> adj(m * m, 0.0);
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t i = e / n, j = e % n;
    for (std::size_t f = 0; f < m; ++f) {
      if (e == f) continue;
      const std::size_t p = f / n, q = f % n;
      if (i == p || i == q || j == p || j == q) adj[e * m + f] = 1.0;
    }
  }
  return adj;
}

const ad::Tensor& normalized_line_graph(std::size_t n) {
  static std::mutex guard;
  static std::map<std::size_t, ad::Tensor> cache;
  std::lock_guard lock(guard);
  auto it = cache.find(n);
  if (it == cache.end()) {
    ad::NoGradGuard no_grad;
    auto raw = ad::Tensor::from({n * n, n * n}, line_graph_adjacency(n));
    it = cache.emplace(n, ad::normalize_adjacency(raw).detach()).first;
  }
  return it->second;
}

ad::Tensor edge_gcn(const ad::Tensor& initial_edges, const GcnStack& stack) {
  require_edge_tensor("edge_gcn", initial_edges);
  const std::size_t n = initial_edges.dim(0), c = initial_edges.dim(2);
  if (stack.in_features() != c) {
    throw ad::ShapeError("edge_gcn: stack expects width " + std::to_string(stack.in_features()) +
                         ", edges have " + std::to_string(c));
  }
  auto flat = ad::reshape(initial_edges, {n * n, c});
  auto out = stack.forward(normalized_line_graph(n), flat, /*relu_on_last=*/false);
  return ad::reshape(out, {n, n, stack.out_features()});
}

ad::Tensor node_pooling(const ad::Tensor& edges) {
  require_edge_tensor("node_pooling", edges);
  const std::size_t n = edges.dim(0);
  auto pooled = ad::reshape(ad::mean_over_axis(edges, 2), {n, n});
  return ad::abs(ad::scale(ad::add(pooled, ad::transpose(pooled)), 0.5));
}

ad::Tensor edge_pooling(const ad::Tensor& edges) {
  require_edge_tensor("edge_pooling", edges);
  return ad::mean_over_axis(edges, 1);
}

ad::Tensor self_loop_edges(const ad::Tensor& edges) {
  require_edge_tensor("self_loop_edges", edges);
  const std::size_t n = edges.dim(0), c = edges.dim(2);
  std::vector<std::size_t> diagonal(n);
  for (std::size_t i = 0; i < n; ++i) diagonal[i] = i * n + i;
  return ad::gather_rows(ad::reshape(edges, {n * n, c}), diagonal);
}

Dgr build_dgr(const ad::Tensor& features, const Mlp& node_builder, const GcnStack& edge_builder, int type_id) {
  if (features.rank() != 2 || features.dim(0) < 2) {
    throw ad::ShapeError("a DGR needs at least 2 nodes, got features " + ad::to_string(features.shape()));
  }
  Dgr dgr;
  dgr.type_id = type_id;
  dgr.nodes = build_nodes(features, node_builder);
  dgr.edges = edge_gcn(init_edges(dgr.nodes), edge_builder);
  dgr.node_adjacency = node_pooling(dgr.edges);
  return dgr;
}

void write_node_csv(std::ostream& out, const Dgr& dgr, std::span<const int> levels) {
  const std::size_t n = dgr.size(), c = dgr.nodes.dim(1);
  if (levels.size() != n) {
    throw std::invalid_argument("write_node_csv: " + std::to_string(levels.size()) + " levels for " +
                                std::to_string(n) + " nodes");
  }
  out << "sample_index,type_id,level";
  for (std::size_t k = 0; k < c; ++k) out << ",v_" << k;
  out << '\n' << std::setprecision(17);
  const auto v = dgr.nodes.data();
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ',' << dgr.type_id << ',' << levels[i];
    for (std::size_t k = 0; k < c; ++k) out << ',' << v[i * c + k];
    out << '\n';
  }
}

void write_edge_csv(std::ostream& out, const Dgr& dgr) {
  require_edge_tensor("write_edge_csv", dgr.edges);
  const std::size_t n = dgr.edges.dim(0), c = dgr.edges.dim(2);
  out << "i,j";
  for (std::size_t k = 0; k < c; ++k) out << ",e_" << k;
  out << '\n' << std::setprecision(17);
  const auto e = dgr.edges.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      out << i << ',' << j;
      for (std::size_t k = 0; k < c; ++k) out << ',' << e[(i * n + j) * c + k];
      out << '\n';
    }
}

}  // namespace dgrlab::graph
