#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nnstd/data.hpp"
#include "nnstd/network.hpp"

namespace nnstd {

enum class TrainMode { SET, FIXED };
enum class RegrowInit { INIT_DIST, ZERO };
enum class PruneRule { MAGNITUDE, SIGNED_TAILS };

struct SetConfig {
  TrainMode mode = TrainMode::SET;
  double prune_rate = 0.2;
  RegrowInit regrow_init = RegrowInit::INIT_DIST;
  PruneRule prune_rule = PruneRule::MAGNITUDE;
  int snapshot_every = 0;  // 0: no snapshots

  void validate() const;
};

// One prune/regrow pass over every layer. kept_from[k][e] is the edge index
// in the old layer k that survived as new edge e, or -1 for a regrown edge.
struct RewireResult {
  SparseNet net;
  std::vector<std::vector<int>> kept_from;
};
RewireResult prune_and_regrow(const SparseNet& net, const SetConfig& cfg, std::uint64_t seed);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct Snapshot {
  int epoch = 0;
  NetworkTopology topology;
};

struct EvolutionTrace {
  std::vector<EpochMetrics> metrics;
  std::vector<Snapshot> snapshots;
};

struct TrainResult {
  SparseNet final_net;
  SparseNet best_net;  // highest validation accuracy (earliest epoch on ties)
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  EvolutionTrace trace;
};

// Trains `net` in place-order: shuffle, minibatch SGD, then (SET mode) one
// prune/regrow pass per epoch. If run_dir is nonempty, writes metrics.csv
// rows as epochs finish and snapshots/epoch_<e>.{topo,ckpt} per
// snapshot_every. Epochs are numbered from 1; snapshots record the topology
// after that epoch's rewiring.
TrainResult train(SparseNet net, const Dataset& data, const TrainConfig& cfg,
                  const SetConfig& set_cfg, const std::filesystem::path& run_dir = {},
                  int workers = 1);

double evaluate(const SparseNet& net, const Dataset& data, Partition p, int workers = 1);

enum class RetrainMode { RANDOM_REINIT, CONTINUE };

// Fitness of an evolved topology: either reinitialize its weights and train
// from scratch, or continue from the given parameters. Returns test accuracy
// of the best-validation network.
double retrain(const SparseNet& snapshot_net, RetrainMode mode, const Dataset& data,
               const TrainConfig& cfg, std::uint64_t reinit_seed = 0, int workers = 1);

}  // namespace nnstd
