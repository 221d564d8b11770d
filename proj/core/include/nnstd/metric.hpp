#pragma once
#include <span>
#include <string>
#include <vector>

#include "nnstd/matrix.hpp"
#include "nnstd/topology.hpp"

namespace nnstd {

// Pairwise normalized-edit-distance matrix between the neurons of two layers.
// Entry (i, j) is the NED of the input sets of neuron i (network 1) and
// neuron j (network 2); all entries lie in [0, 1].
using CostMatrix = Matrix;

// A minimum-cost perfect matching between the neurons of two layers.
struct Assignment {
  // mapping[j] = i: neuron j of network 2 is matched to neuron i of network 1.
  std::vector<int> mapping;
  double total_cost = 0.0;

  static Assignment identity(int n);
};

// Result of comparing two networks layer by layer.
struct DistanceReport {
  std::vector<double> per_layer;        // normalized cost of each connection layer
  std::vector<Assignment> assignments;  // matching chosen at each layer
  double nnstd = 0.0;                   // mean of per_layer
};

// Jaccard distance between two sorted sets: |symmetric difference| / |union|.
// Two empty sets have distance 0.
double ned(std::span<const int> g1, std::span<const int> g2);
double ned(std::span<const NeuronId> g1, std::span<const NeuronId> g2);

// Exact minimum-cost assignment on a square cost matrix (Jonker-Volgenant
// style shortest augmenting paths, O(n^3)). Deterministic: among equal-cost
// candidates the scan always keeps the lowest column index.
Assignment solve_assignment(const CostMatrix& c);

// Pairwise NED matrix between the output neurons of l1 and l2, with l2's
// input sets relabeled through `prev` (the matching of the previous layer).
CostMatrix cost_matrix(const LayerTopology& l1, const LayerTopology& l2,
                       const Assignment& prev, int workers = 1);

// One step of the layer-wise comparison: build the cost matrix, solve the
// matching, return it with the total cost normalized by the layer width.
// With labeled_outputs the matching is not solved but forced to identity
// (used for the output layer, whose neurons are class-labeled).
std::pair<Assignment, double> compare_layers(const LayerTopology& l1,
                                             const LayerTopology& l2,
                                             const Assignment& prev,
                                             bool labeled_outputs = false,
                                             int workers = 1);

// Sparse topology distance between two networks of identical architecture:
// walks layers input to output, carrying each solved matching into the next
// layer's relabeling; the last layer is treated as labeled. Result is the
// mean of the per-layer normalized costs, in [0, 1].
DistanceReport compare_networks(const NetworkTopology& n1, const NetworkTopology& n2,
                                int workers = 1);

// Distance matrix over a set of same-architecture topologies. The upper
// triangle is computed and mirrored; the diagonal is zero. `layer` = -1
// takes the aggregate distance, otherwise the given connection layer's
// normalized cost.
Matrix pairwise_matrix(std::span<const NetworkTopology> ts, int layer = -1,
                       int workers = 1);

std::string report_to_json(const DistanceReport& r);

}  // namespace nnstd
