#pragma once

// Distortion graph representation (DGR) construction.
//
// Nodes are per-sample embeddings produced row-wise by the node builder.
// Edges start as elementwise products of node pairs and are refined by a
// GCN that runs over the line graph of the complete graph on N nodes
// (N^2 ordered edges, adjacent when they share an endpoint). Node pooling
// and edge pooling turn the edge tensor back into node-level quantities.

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "dgrlab/layers.hpp"
#include "dgrlab/tensor.hpp"

namespace dgrlab::graph {

struct Dgr {
  ad::Tensor nodes;           // V   [N, C]
  ad::Tensor edges;           // E   [N, N, C_E]
  ad::Tensor node_adjacency;  // A_V [N, N], node_pooling(E)
  int type_id = -1;

  std::size_t size() const { return nodes.dim(0); }
};

ad::Tensor build_nodes(const ad::Tensor& features, const Mlp& node_builder);

// e0_{i,j} = v_i * v_j elementwise; returns [N, N, C].
ad::Tensor init_edges(const ad::Tensor& nodes);

// Binary N^2 x N^2 line-graph adjacency. Edge (i,j) sits at row i*N+j.
std::vector<double> line_graph_adjacency(std::size_t n);

// Constant normalised line-graph adjacency for graphs of size n.
const ad::Tensor& normalized_line_graph(std::size_t n);

// GCN over edges: [N, N, C] -> [N, N, C_E]. Last layer is linear.
ad::Tensor edge_gcn(const ad::Tensor& initial_edges, const GcnStack& stack);

// |(P + P^T) / 2| where P[i,j] is the channel mean of e_{i,j}.
ad::Tensor node_pooling(const ad::Tensor& edges);

// Row mean over j: [N, N, C_E] -> [N, C_E].
ad::Tensor edge_pooling(const ad::Tensor& edges);

// Diagonal edges e_{i,i}: [N, N, C_E] -> [N, C_E].
ad::Tensor self_loop_edges(const ad::Tensor& edges);

Dgr build_dgr(const ad::Tensor& features, const Mlp& node_builder, const GcnStack& edge_builder,
              int type_id = -1);

// Embedding export. Node rows are `sample_index,type_id,level,v_0..v_{C-1}`
// (levels[i] labels node i); edge rows are `i,j,e_0..e_{C_E-1}`. Both start
// with a header row.
void write_node_csv(std::ostream& out, const Dgr& dgr, std::span<const int> levels);
void write_edge_csv(std::ostream& out, const Dgr& dgr);

}  // namespace dgrlab::graph
