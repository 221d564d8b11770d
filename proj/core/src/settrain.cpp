#include "nnstd/settrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nnstd/errors.hpp"
#include "nnstd/rng.hpp"

namespace nnstd {

void SetConfig::validate() const {
  if (!(prune_rate > 0 && prune_rate < 1))
    throw ConfigError("prune rate must be in (0, 1)");
  if (snapshot_every < 0) throw ConfigError("snapshot interval must be non-negative");
}

namespace {

struct EdgeDraft {
  int target;
  int source;
  double weight;
  int old_index;  // -1 for regrown edges
};

void take_prefix_sample(std::vector<std::int64_t>& v, std::int64_t m, Rng& rng) {
  const std::int64_t n = static_cast<std::int64_t>(v.size());
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(rng.below(n - i));
    std::swap(v[i], v[j]);
  }
  v.resize(m);
}

// Edge indices to prune, smallest magnitude first; ties broken by edge index
// so the choice is reproducible.
std::vector<int> prune_victims(const std::vector<double>& w, double zeta, PruneRule rule) {
  const int count = static_cast<int>(w.size());
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  auto by_magnitude = [&](int a, int b) {
    const double ma = std::fabs(w[a]), mb = std::fabs(w[b]);
    return ma != mb ? ma < mb : a < b;
  };

  if (rule == PruneRule::MAGNITUDE) {
    const int m = static_cast<int>(zeta * count);
    std::partial_sort(order.begin(), order.begin() + m, order.end(), by_magnitude);
    order.resize(m);
    return order;
  }

  // Closest to zero from each side: the smallest positive and the largest
  // negative weights, a per-sign fraction zeta each.
  std::vector<int> pos, neg;
  for (int i = 0; i < count; ++i) (w[i] >= 0 ? pos : neg).push_back(i);
  const int mp = static_cast<int>(zeta * pos.size());
  const int mn = static_cast<int>(zeta * neg.size());
  std::partial_sort(pos.begin(), pos.begin() + mp, pos.end(), by_magnitude);
  std::partial_sort(neg.begin(), neg.begin() + mn, neg.end(), by_magnitude);
  pos.resize(mp);
  neg.resize(mn);
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

}  // namespace

RewireResult prune_and_regrow(const SparseNet& net, const SetConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  net.validate();

  RewireResult res;
  const auto& widths = net.topology.layer_widths();
  std::vector<LayerTopology> layers;
  layers.reserve(net.depth());
  res.net.weights.resize(net.depth());
  res.kept_from.resize(net.depth());

  for (int k = 0; k < net.depth(); ++k) {
    const LayerTopology& layer = net.topology.layer(k);
    const auto& w = net.weights[k];
    const std::vector<int> victims = prune_victims(w, cfg.prune_rate, cfg.prune_rule);
    const std::int64_t m = static_cast<std::int64_t>(victims.size());

    if (m == 0) {
      layers.push_back(layer);
      res.net.weights[k] = w;
      auto& kept = res.kept_from[k];
      kept.resize(w.size());
      std::iota(kept.begin(), kept.end(), 0);
      continue;
    }

    const std::int64_t empty = layer.possible_edges() - layer.edge_count();
    if (empty < m)
      throw RegrowthError("layer " + std::to_string(k) + " has only " +
                          std::to_string(empty) + " empty positions, need " +
                          std::to_string(m));

    std::vector<char> removed(w.size(), 0);
    for (int v : victims) removed[v] = 1;

    std::vector<EdgeDraft> drafts;
    drafts.reserve(w.size());
    layer.for_each_edge([&](int s, int t, int e) {
      if (!removed[e]) drafts.push_back({t, s, w[e], e});
    });

    // Regrowth stream per layer: hole choice first, then (in draw order) the
    // fresh weights.
    Rng rng(derive_seed(seed, k));
    std::vector<std::int64_t> holes;
    holes.reserve(empty);
    for (int t = 0; t < layer.out_width(); ++t) {
      auto run = layer.sources_of(t);
      std::size_t i = 0;
      for (int s = 0; s < layer.in_width(); ++s) {
        if (i < run.size() && run[i] == s) {
          ++i;
          continue;
        }
        holes.push_back(static_cast<std::int64_t>(t) * layer.in_width() + s);
      }
    }
    take_prefix_sample(holes, m, rng);

    // Fresh weights stay on the dense-widths scale: regrowth is exploration,
    // and draws on the init_bound scale of a very sparse layer are large
    // enough to wreck the trained function every epoch.
    const double bound = std::sqrt(6.0 / (widths[k] + widths[k + 1]));
    for (auto h : holes) {
      const double fresh =
          cfg.regrow_init == RegrowInit::INIT_DIST ? rng.uniform(-bound, bound) : 0.0;
      drafts.push_back({static_cast<int>(h / layer.in_width()),
                        static_cast<int>(h % layer.in_width()), fresh, -1});
    }

    std::sort(drafts.begin(), drafts.end(), [](const EdgeDraft& a, const EdgeDraft& b) {
      return a.target != b.target ? a.target < b.target : a.source < b.source;
    });

    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(drafts.size());
    auto& nw = res.net.weights[k];
    auto& kept = res.kept_from[k];
    nw.reserve(drafts.size());
    kept.reserve(drafts.size());
    for (const auto& d : drafts) {
      pairs.emplace_back(d.source, d.target);
      nw.push_back(d.weight);
      kept.push_back(d.old_index);
    }
    layers.emplace_back(layer.in_width(), layer.out_width(), pairs);
  }

  res.net.topology = NetworkTopology(widths, std::move(layers));
  res.net.biases = net.biases;
  res.net.srelu = net.srelu;
  return res;
}

namespace {

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Fixed evaluation batch size: the loss reduction order never depends on the
// training batch size or worker count.
constexpr int kEvalBatch = 1000;

EvalResult eval_loss_acc(const SparseNet& net, const Dataset& data, Partition p,
                         int workers) {
  const int n = data.count(p);
  if (n == 0) throw TrainError("empty evaluation partition");
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (int start = 0; start < n; start += kEvalBatch) {
    const int stop = std::min(n, start + kEvalBatch);
    std::vector<int> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix x = data.batch_features(p, idx);
    const std::vector<int> y = data.batch_labels(p, idx);
    const ForwardPass fp = forward(net, x, workers);
    const LossGrad lg = softmax_cross_entropy(fp.logits(), y);
    loss_sum += lg.loss * (stop - start);
    const Matrix& z = fp.logits();
    for (int r = 0; r < z.rows; ++r) {
      int best = 0;
      for (int c = 1; c < z.cols; ++c)
        if (z(r, c) > z(r, best)) best = c;
      if (best == y[r]) ++correct;
    }
  }
  return {loss_sum / n, static_cast<double>(correct) / n};
}

void write_snapshot(const std::filesystem::path& run_dir, int epoch, const SparseNet& net) {
  const auto dir = run_dir / "snapshots";
  const auto topo = dir / ("epoch_" + std::to_string(epoch) + ".topo");
  const auto ckpt = dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
  const auto tmp_topo = dir / ("epoch_" + std::to_string(epoch) + ".topo.tmp");
  const auto tmp_ckpt = dir / ("epoch_" + std::to_string(epoch) + ".ckpt.tmp");
  save_checkpoint(net, tmp_topo, tmp_ckpt);
  std::filesystem::rename(tmp_topo, topo);
  std::filesystem::rename(tmp_ckpt, ckpt);
}

}  // namespace

TrainResult train(SparseNet net, const Dataset& data, const TrainConfig& cfg,
                  const SetConfig& set_cfg, const std::filesystem::path& run_dir,
                  int workers) {
  cfg.validate();
  set_cfg.validate();
  net.validate();
  const auto& widths = net.topology.layer_widths();
  if (data.feature_dim() != widths.front())
    throw TrainError("dataset feature width does not match the network input");
  if (data.num_classes() != widths.back())
    throw TrainError("dataset class count does not match the network output");
  const int train_n = data.count(Partition::TRAIN);
  if (train_n == 0) throw TrainError("empty training partition");

  std::ofstream metrics;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir / "snapshots");
    metrics.open(run_dir / "metrics.csv");
    if (!metrics) throw IoError("cannot write " + (run_dir / "metrics.csv").string());
    metrics << "epoch,train_loss,val_loss,val_acc\n";
  }

  TrainResult res;
  res.trace.snapshots.push_back({0, net.topology});
  if (!run_dir.empty() && set_cfg.snapshot_every > 0) write_snapshot(run_dir, 0, net);

  OptState velocity = OptState::zeros_like(net);
  std::vector<int> order(train_n);
  std::iota(order.begin(), order.end(), 0);
  double best_acc = -1.0;
  SparseNet best = net;
  int best_epoch = 0;

  char line[160];
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Three derived streams per epoch: shuffle, augmentation, rewiring.
    Rng shuffle_rng(derive_seed(cfg.seed, 3ULL * epoch));
    Rng augment_rng(derive_seed(cfg.seed, 3ULL * epoch + 1));
    for (int i = train_n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < train_n; start += cfg.batch_size) {
      const int stop = std::min(train_n, start + cfg.batch_size);
      const std::span<const int> idx(order.data() + start, static_cast<std::size_t>(stop - start));
      Matrix x = data.batch_features(Partition::TRAIN, idx);
      const std::vector<int> y = data.batch_labels(Partition::TRAIN, idx);
      if (data.augment_enabled())
        augment_batch(x, augment_rng, data.channels(), data.height(), data.width());
      auto [loss, grads] = loss_and_gradients(net, x, y, workers);
      loss_sum += loss * (stop - start);
      sgd_step(net, grads, cfg, velocity);
    }

    const EvalResult val = eval_loss_acc(net, data, Partition::VAL, workers);
    const double train_loss = loss_sum / train_n;
    res.trace.metrics.push_back({epoch, train_loss, val.loss, val.accuracy});
    if (metrics.is_open()) {
      std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f\n", epoch, train_loss, val.loss,
                    val.accuracy);
      metrics << line;
      metrics.flush();
    }

    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      best = net;
      best_epoch = epoch;
    }

    const bool due = set_cfg.snapshot_every > 0 && epoch % set_cfg.snapshot_every == 0;
    if (due || epoch == cfg.epochs) {
      res.trace.snapshots.push_back({epoch, net.topology});
      if (!run_dir.empty() && set_cfg.snapshot_every > 0) write_snapshot(run_dir, epoch, net);
    }

    // Rewire between epochs, after the trained network has been measured and
    // recorded; fresh connections grown after the last epoch would never see
    // a gradient, so none are grown there.
    if (set_cfg.mode == TrainMode::SET && epoch < cfg.epochs) {
      RewireResult rw = prune_and_regrow(net, set_cfg, derive_seed(cfg.seed, 3ULL * epoch + 2));
      OptState nv = OptState::zeros_like(rw.net);
      for (int k = 0; k < net.depth(); ++k) {
        for (std::size_t e = 0; e < rw.kept_from[k].size(); ++e) {
          const int old = rw.kept_from[k][e];
          if (old >= 0) nv.weights[k][e] = velocity.weights[k][old];
        }
        nv.biases[k] = velocity.biases[k];
        if (k < net.depth() - 1) nv.srelu[k] = velocity.srelu[k];
      }
      net = std::move(rw.net);
      velocity = std::move(nv);
    }
  }

  if (cfg.epochs == 0) best_acc = eval_loss_acc(net, data, Partition::VAL, workers).accuracy;

  res.final_net = std::move(net);
  res.best_net = std::move(best);
  res.best_epoch = best_epoch;
  res.best_val_accuracy = best_acc;
  return res;
}

double evaluate(const SparseNet& net, const Dataset& data, Partition p, int workers) {
  return eval_loss_acc(net, data, p, workers).accuracy;
}

double retrain(const SparseNet& snapshot_net, RetrainMode mode, const Dataset& data,
               const TrainConfig& cfg, std::uint64_t reinit_seed, int workers) {
  SparseNet net = mode == RetrainMode::RANDOM_REINIT
                      ? init_weights(snapshot_net.topology, reinit_seed)
                      : snapshot_net;
  SetConfig fixed;
  fixed.mode = TrainMode::FIXED;
  TrainResult res = train(std::move(net), data, cfg, fixed, {}, workers);
  return evaluate(res.best_net, data, Partition::TEST, workers);
}

}  // namespace nnstd
