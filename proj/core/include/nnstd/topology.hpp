#pragma once
#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace nnstd {

// A neuron addressed by its layer and its position within that layer.
struct NeuronId {
  int layer = 0;
  int position = 0;
  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

// Sparse bipartite connectivity between two consecutive neuron layers: the
// support of one weight matrix. Edges are held in canonical (target, source)
// order, so the input set of every target neuron is a contiguous sorted run
// and serialization is unique for a given edge set.
class LayerTopology {
 public:
  LayerTopology() = default;

  // `edges` are (source, target) pairs in any order. Throws ConfigError on
  // out-of-range endpoints or duplicate edges.
  LayerTopology(int in_width, int out_width, std::span<const std::pair<int, int>> edges);

  int in_width() const { return in_width_; }
  int out_width() const { return out_width_; }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(sources_.size()); }
  std::int64_t possible_edges() const {
    return static_cast<std::int64_t>(in_width_) * out_width_;
  }

  // Sorted positions of the neurons feeding `target`.
  std::span<const int> sources_of(int target) const {
    return {sources_.data() + row_offsets_[target],
            static_cast<std::size_t>(row_offsets_[target + 1] - row_offsets_[target])};
  }

  bool has_edge(int source, int target) const;

  // Edges in canonical order. f(source, target, edge_index).
  template <class F>
  void for_each_edge(F&& f) const {
    for (int t = 0; t < out_width_; ++t)
      for (int i = row_offsets_[t]; i < row_offsets_[t + 1]; ++i) f(sources_[i], t, i);
  }

  std::vector<std::pair<int, int>> edges() const;

  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& sources() const { return sources_; }

  friend bool operator==(const LayerTopology&, const LayerTopology&) = default;

 private:
  int in_width_ = 0;
  int out_width_ = 0;
  std::vector<int> row_offsets_;  // size out_width_ + 1
  std::vector<int> sources_;      // grouped by target, each group sorted
};

// The connectivity of a whole layered network: widths [n0, n1, ..., nL] and
// L sparse connection layers. Immutable after construction; all operations
// below build new values.
class NetworkTopology {
 public:
  NetworkTopology() = default;
  NetworkTopology(std::vector<int> layer_widths, std::vector<LayerTopology> layers);

  const std::vector<int>& layer_widths() const { return widths_; }
  int depth() const { return static_cast<int>(layers_.size()); }  // connection layers L
  const LayerTopology& layer(int k) const { return layers_[k]; }
  const std::vector<LayerTopology>& layers() const { return layers_; }

  std::int64_t edge_count() const;
  std::int64_t possible_edges() const;

  friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;

 private:
  std::vector<int> widths_;
  std::vector<LayerTopology> layers_;
};

struct ErConfig {
  double epsilon = 1.0;    // sparsity control; higher is denser
  std::uint64_t seed = 0;
};

// Edge probability of one layer: min(eps * (n_in + n_out) / (n_in * n_out), 1).
double er_edge_probability(double epsilon, int in_width, int out_width);

// Random sparse topology where each potential edge of layer k exists
// independently with er_edge_probability(eps, n^{k-1}, n^k).
NetworkTopology er_init(const std::vector<int>& widths, const ErConfig& cfg);

// Same sampling with the edge probability of every layer pinned to `density`
// (equivalent to choosing a per-layer epsilon).
NetworkTopology er_init_density(const std::vector<int>& widths, double density,
                                std::uint64_t seed);

// Replace ceil(fraction * edge_count) edges per layer: that many edges are
// removed uniformly and the same number are added at positions that were
// unoccupied in the input layer, so the per-layer edge count is preserved
// and exactly that many connections change.
NetworkTopology perturb(const NetworkTopology& t, double fraction, std::uint64_t seed);

// Fraction of possible connections present, over all layers.
double density(const NetworkTopology& t);

// Relabel the neurons of one hidden layer (width index 1..L-1): neuron at
// position p moves to position perm[p]. Incoming edge targets and outgoing
// edge sources follow. The result represents the same function graph.
NetworkTopology permute_hidden_layer(const NetworkTopology& t, int width_index,
                                     std::span<const int> perm);

// Provenance recorded in topology file headers.
struct TopologyMeta {
  double epsilon = 0.0;    // 0 when unknown / not applicable
  std::uint64_t seed = 0;
};

void save_topology(const NetworkTopology& t, const std::filesystem::path& path,
                   const TopologyMeta& meta = {});
NetworkTopology load_topology(const std::filesystem::path& path,
                              TopologyMeta* meta = nullptr);

}  // namespace nnstd
