#pragma once
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "nnstd/matrix.hpp"
#include "nnstd/topology.hpp"

namespace nnstd {

// Per-neuron S-shaped rectifier parameters: two knots and the slopes outside
// them; identity in between. (0, 0, 1, 1) behaves like ReLU below 1 and
// identity above.
struct SReluParams {
  double t_left = 0.0;
  double a_left = 0.0;
  double t_right = 1.0;
  double a_right = 1.0;

  friend bool operator==(const SReluParams&, const SReluParams&) = default;
};

inline double srelu(double x, const SReluParams& p) {
  if (x <= p.t_left) return p.a_left * (x - p.t_left) + p.t_left;
  if (x >= p.t_right) return p.a_right * (x - p.t_right) + p.t_right;
  return x;
}

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 1e-6;
  int batch_size = 128;
  int epochs = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// A multilayer perceptron whose weights live only on the support of its
// topology. weights[k][e] belongs to the e-th edge of layer k in canonical
// order; biases cover every non-input neuron; SReLU parameters cover hidden
// neurons (the output layer feeds a softmax head directly).
struct SparseNet {
  NetworkTopology topology;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<SReluParams>> srelu;  // [0 .. L-2][hidden neuron]

  int depth() const { return topology.depth(); }
  void validate() const;

  friend bool operator==(const SparseNet&, const SparseNet&) = default;
};

// Half-width of the uniform weight init for one connection layer:
// sqrt(6 / (fan_in + fan_out)) with the fans taken as the layer's average
// realized degrees (edges / width). On a fully-connected layer this is the
// classic dense-widths bound; on sparse layers it grows as 1/sqrt(density),
// which keeps activation variance from collapsing at high sparsity.
double init_bound(const LayerTopology& l);

// Weights uniform in +-init_bound per layer; biases zero; SReLU at
// (0, 0, 1, 1).
SparseNet init_weights(const NetworkTopology& t, std::uint64_t seed);

// Activations kept for the backward pass. pre[k] holds layer k's
// pre-activations; post[0] is the input batch and post[k+1] the activations
// entering layer k+1. pre.back() are the logits.
struct ForwardPass {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;

  const Matrix& logits() const { return pre.back(); }
};

ForwardPass forward(const SparseNet& net, const Matrix& batch, int workers = 1);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<SReluParams>> srelu;  // reused as a gradient holder

  static Gradients zeros_like(const SparseNet& net);
};

// Mean cross-entropy of softmax(logits) against integer labels, and its
// gradient with respect to the logits.
struct LossGrad {
  double loss = 0.0;
  Matrix dlogits;
};
LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

// Exact gradients of the scalar loss whose dlogits is given, restricted to
// the sparse support. Parameter gradients at an exact SReLU knot take the
// interior branch (zero knot/slope contribution).
Gradients backward(const SparseNet& net, const ForwardPass& fp, const Matrix& dlogits,
                   int workers = 1);

// forward + softmax_cross_entropy + backward in one call.
std::pair<double, Gradients> loss_and_gradients(const SparseNet& net, const Matrix& batch,
                                                std::span<const int> labels,
                                                int workers = 1);

// Nesterov momentum velocity, same shapes as the parameters.
struct OptState {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<SReluParams>> srelu;

  static OptState zeros_like(const SparseNet& net);
};

// v <- mu v + g', w <- w - lr (g' + mu v), with g' = g + wd*w for connection
// weights and g' = g for biases and SReLU parameters.
void sgd_step(SparseNet& net, const Gradients& g, const TrainConfig& cfg, OptState& velocity);

// Checkpoint = topology file + parallel parameter file; hexfloat text, exact
// round-trip.
void save_checkpoint(const SparseNet& net, const std::filesystem::path& topo_path,
                     const std::filesystem::path& params_path,
                     const TopologyMeta& meta = {});
SparseNet load_checkpoint(const std::filesystem::path& topo_path,
                          const std::filesystem::path& params_path);

}  // namespace nnstd
