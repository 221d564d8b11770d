#include "nnstd/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "nnstd/errors.hpp"
#include "nnstd/rng.hpp"
#include "parallel.hpp"

namespace nnstd {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight decay must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epoch count must be non-negative");
}

void SparseNet::validate() const {
  const int L = depth();
  const auto& widths = topology.layer_widths();
  if (static_cast<int>(weights.size()) != L || static_cast<int>(biases.size()) != L ||
      static_cast<int>(srelu.size()) != L - 1)
    throw DimensionError("parameter arrays do not match topology depth");
  for (int k = 0; k < L; ++k) {
    if (static_cast<std::int64_t>(weights[k].size()) != topology.layer(k).edge_count())
      throw DimensionError("layer " + std::to_string(k) + " weight count mismatch");
    if (static_cast<int>(biases[k].size()) != widths[k + 1])
      throw DimensionError("layer " + std::to_string(k) + " bias count mismatch");
    if (k < L - 1 && static_cast<int>(srelu[k].size()) != widths[k + 1])
      throw DimensionError("layer " + std::to_string(k) + " activation count mismatch");
  }
}

double init_bound(const LayerTopology& l) {
  const auto e = static_cast<double>(l.edge_count());
  if (e == 0.0) return 0.0;
  const double fan_in = e / l.out_width();
  const double fan_out = e / l.in_width();
  return std::sqrt(6.0 / (fan_in + fan_out));
}

SparseNet init_weights(const NetworkTopology& t, std::uint64_t seed) {
  SparseNet net;
  net.topology = t;
  const auto& widths = t.layer_widths();
  const int L = t.depth();
  net.weights.resize(L);
  net.biases.resize(L);
  net.srelu.resize(L - 1);
  for (int k = 0; k < L; ++k) {
    // One stream per layer, weights in canonical edge order.
    Rng rng(derive_seed(seed, k));
    const double bound = init_bound(t.layer(k));
    auto& w = net.weights[k];
    w.resize(t.layer(k).edge_count());
    for (auto& v : w) v = rng.uniform(-bound, bound);
    net.biases[k].assign(widths[k + 1], 0.0);
    if (k < L - 1) net.srelu[k].assign(widths[k + 1], SReluParams{});
  }
  return net;
}

ForwardPass forward(const SparseNet& net, const Matrix& batch, int workers) {
  const auto& widths = net.topology.layer_widths();
  if (batch.cols != widths[0])
    throw DimensionError("input width " + std::to_string(batch.cols) +
                         " does not match network input " + std::to_string(widths[0]));
  const int L = net.depth();
  const int rows = batch.rows;

  ForwardPass fp;
  fp.pre.reserve(L);
  fp.post.reserve(L);
  fp.post.push_back(batch);

  for (int k = 0; k < L; ++k) {
    const LayerTopology& layer = net.topology.layer(k);
    const int* ro = layer.row_offsets().data();
    const int* src = layer.sources().data();
    const double* w = net.weights[k].data();
    const double* b = net.biases[k].data();
    const Matrix& x = fp.post[k];
    Matrix z(rows, widths[k + 1]);

    detail::parallel_for(rows, workers, [&](int lo, int hi) {
      for (int r = lo; r < hi; ++r) {
        const double* xr = x.row(r).data();
        double* zr = z.row(r).data();
        for (int t = 0; t < z.cols; ++t) {
          double acc = b[t];
          for (int i = ro[t]; i < ro[t + 1]; ++i) acc += xr[src[i]] * w[i];
          zr[t] = acc;
        }
      }
    });

    if (k < L - 1) {
      Matrix a(rows, z.cols);
      const SReluParams* ps = net.srelu[k].data();
      detail::parallel_for(rows, workers, [&](int lo, int hi) {
        for (int r = lo; r < hi; ++r) {
          const double* zr = z.row(r).data();
          double* ar = a.row(r).data();
          for (int t = 0; t < z.cols; ++t) ar[t] = srelu(zr[t], ps[t]);
        }
      });
      fp.pre.push_back(std::move(z));
      fp.post.push_back(std::move(a));
    } else {
      fp.pre.push_back(std::move(z));
    }
  }
  return fp;
}

Gradients Gradients::zeros_like(const SparseNet& net) {
  Gradients g;
  g.weights.resize(net.depth());
  g.biases.resize(net.depth());
  g.srelu.resize(net.depth() - 1);
  for (int k = 0; k < net.depth(); ++k) {
    g.weights[k].assign(net.weights[k].size(), 0.0);
    g.biases[k].assign(net.biases[k].size(), 0.0);
    if (k < net.depth() - 1)
      g.srelu[k].assign(net.srelu[k].size(), SReluParams{0, 0, 0, 0});
  }
  return g;
}

OptState OptState::zeros_like(const SparseNet& net) {
  OptState s;
  s.weights.resize(net.depth());
  s.biases.resize(net.depth());
  s.srelu.resize(net.depth() - 1);
  for (int k = 0; k < net.depth(); ++k) {
    s.weights[k].assign(net.weights[k].size(), 0.0);
    s.biases[k].assign(net.biases[k].size(), 0.0);
    if (k < net.depth() - 1)
      s.srelu[k].assign(net.srelu[k].size(), SReluParams{0, 0, 0, 0});
  }
  return s;
}

LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw DimensionError("one label per batch row required");
  LossGrad out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  double total = 0.0;
  const double inv_n = logits.rows > 0 ? 1.0 / logits.rows : 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= logits.cols)
      throw TrainError("label " + std::to_string(y) + " out of range");
    const double* z = logits.row(r).data();
    double m = z[0];
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, z[c]);
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) sum += std::exp(z[c] - m);
    total += std::log(sum) + m - z[y];
    double* d = out.dlogits.row(r).data();
    for (int c = 0; c < logits.cols; ++c) d[c] = std::exp(z[c] - m) / sum * inv_n;
    d[y] -= inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

Gradients backward(const SparseNet& net, const ForwardPass& fp, const Matrix& dlogits,
                   int workers) {
  const int L = net.depth();
  if (dlogits.rows != fp.pre.back().rows || dlogits.cols != fp.pre.back().cols)
    throw DimensionError("dlogits shape does not match the forward logits");

  Gradients g = Gradients::zeros_like(net);
  const int rows = dlogits.rows;
  Matrix delta = dlogits;

  for (int k = L - 1; k >= 0; --k) {
    const LayerTopology& layer = net.topology.layer(k);
    const int* ro = layer.row_offsets().data();
    const int* src = layer.sources().data();
    const double* w = net.weights[k].data();
    const Matrix& x = fp.post[k];

    // Parameter gradients: each worker owns a disjoint target range, and
    // every accumulator runs over rows in ascending order, so sums do not
    // depend on the worker count.
    double* gw = g.weights[k].data();
    double* gb = g.biases[k].data();
    detail::parallel_for(layer.out_width(), workers, [&](int lo, int hi) {
      for (int t = lo; t < hi; ++t) {
        const int begin = ro[t], cnt = ro[t + 1] - ro[t];
        double bias_acc = 0.0;
        for (int r = 0; r < rows; ++r) {
          const double d = delta(r, t);
          bias_acc += d;
          if (d == 0.0) continue;
          const double* xr = x.row(r).data();
          for (int i = 0; i < cnt; ++i) gw[begin + i] += d * xr[src[begin + i]];
        }
        gb[t] = bias_acc;
      }
    });

    if (k == 0) break;

    // Gradient with respect to this layer's inputs, one row per worker.
    Matrix dpost(rows, layer.in_width());
    detail::parallel_for(rows, workers, [&](int lo, int hi) {
      for (int r = lo; r < hi; ++r) {
        double* dx = dpost.row(r).data();
        const double* dr = delta.row(r).data();
        for (int t = 0; t < layer.out_width(); ++t) {
          const double d = dr[t];
          if (d == 0.0) continue;
          for (int i = ro[t]; i < ro[t + 1]; ++i) dx[src[i]] += d * w[i];
        }
      }
    });

    // Through the activation of layer k-1. Exactly at a knot the interior
    // branch applies: derivative 1, no parameter gradient.
    const Matrix& pre = fp.pre[k - 1];
    const SReluParams* ps = net.srelu[k - 1].data();
    SReluParams* gs = g.srelu[k - 1].data();
    Matrix dpre(rows, pre.cols);
    detail::parallel_for(pre.cols, workers, [&](int lo, int hi) {
      for (int t = lo; t < hi; ++t) {
        const SReluParams p = ps[t];
        SReluParams acc{0, 0, 0, 0};
        for (int r = 0; r < rows; ++r) {
          const double z = pre(r, t);
          const double d = dpost(r, t);
          if (z < p.t_left) {
            dpre(r, t) = d * p.a_left;
            acc.a_left += d * (z - p.t_left);
            acc.t_left += d * (1.0 - p.a_left);
          } else if (z > p.t_right) {
            dpre(r, t) = d * p.a_right;
            acc.a_right += d * (z - p.t_right);
            acc.t_right += d * (1.0 - p.a_right);
          } else {
            dpre(r, t) = d;
          }
        }
        gs[t] = acc;
      }
    });
    delta = std::move(dpre);
  }
  return g;
}

std::pair<double, Gradients> loss_and_gradients(const SparseNet& net, const Matrix& batch,
                                                std::span<const int> labels, int workers) {
  const ForwardPass fp = forward(net, batch, workers);
  LossGrad lg = softmax_cross_entropy(fp.logits(), labels);
  Gradients g = backward(net, fp, lg.dlogits, workers);
  return {lg.loss, std::move(g)};
}

namespace {

inline void nesterov(double& w, double& v, double gp, double lr, double mu) {
  v = mu * v + gp;
  w -= lr * (gp + mu * v);
}

}  // namespace

void sgd_step(SparseNet& net, const Gradients& g, const TrainConfig& cfg,
              OptState& velocity) {
  const int L = net.depth();
  if (static_cast<int>(g.weights.size()) != L ||
      static_cast<int>(velocity.weights.size()) != L)
    throw DimensionError("gradient or velocity depth mismatch");
  const double lr = cfg.learning_rate, mu = cfg.momentum, wd = cfg.weight_decay;

  for (int k = 0; k < L; ++k) {
    auto& w = net.weights[k];
    if (g.weights[k].size() != w.size() || velocity.weights[k].size() != w.size())
      throw DimensionError("layer " + std::to_string(k) + " weight shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i)
      nesterov(w[i], velocity.weights[k][i], g.weights[k][i] + wd * w[i], lr, mu);

    auto& b = net.biases[k];
    if (g.biases[k].size() != b.size() || velocity.biases[k].size() != b.size())
      throw DimensionError("layer " + std::to_string(k) + " bias shape mismatch");
    for (std::size_t i = 0; i < b.size(); ++i)
      nesterov(b[i], velocity.biases[k][i], g.biases[k][i], lr, mu);

    if (k == L - 1) continue;
    auto& s = net.srelu[k];
    if (g.srelu[k].size() != s.size() || velocity.srelu[k].size() != s.size())
      throw DimensionError("layer " + std::to_string(k) + " activation shape mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      nesterov(s[i].t_left, velocity.srelu[k][i].t_left, g.srelu[k][i].t_left, lr, mu);
      nesterov(s[i].a_left, velocity.srelu[k][i].a_left, g.srelu[k][i].a_left, lr, mu);
      nesterov(s[i].t_right, velocity.srelu[k][i].t_right, g.srelu[k][i].t_right, lr, mu);
      nesterov(s[i].a_right, velocity.srelu[k][i].a_right, g.srelu[k][i].a_right, lr, mu);
    }
  }
}

namespace {

void put(std::ostream& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out << buf << '\n';
}

double get(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  if (!(in >> tok)) throw ParseError(path.string() + ": unexpected end of parameters");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size())
    throw ParseError(path.string() + ": bad numeric token '" + tok + "'");
  return v;
}

}  // namespace

void save_checkpoint(const SparseNet& net, const std::filesystem::path& topo_path,
                     const std::filesystem::path& params_path, const TopologyMeta& meta) {
  net.validate();
  save_topology(net.topology, topo_path, meta);
  std::ofstream out(params_path);
  if (!out) throw IoError("cannot write " + params_path.string());
  out << "nnstd.ckpt 1\n";
  out << "layers " << net.depth() << '\n';
  for (int k = 0; k < net.depth(); ++k) {
    out << "weights " << net.weights[k].size() << '\n';
    for (double v : net.weights[k]) put(out, v);
    out << "biases " << net.biases[k].size() << '\n';
    for (double v : net.biases[k]) put(out, v);
    if (k < net.depth() - 1) {
      out << "srelu " << net.srelu[k].size() << '\n';
      for (const auto& p : net.srelu[k]) {
        put(out, p.t_left);
        put(out, p.a_left);
        put(out, p.t_right);
        put(out, p.a_right);
      }
    }
  }
  out.flush();
  if (!out) throw IoError("write failed: " + params_path.string());
}

SparseNet load_checkpoint(const std::filesystem::path& topo_path,
                          const std::filesystem::path& params_path) {
  SparseNet net;
  net.topology = load_topology(topo_path);

  std::ifstream in(params_path);
  if (!in) throw IoError("cannot read " + params_path.string());
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "nnstd.ckpt" || version != 1)
    throw ParseError(params_path.string() + ": not a checkpoint file");
  int layers = 0;
  if (!(in >> word >> layers) || word != "layers")
    throw ParseError(params_path.string() + ": missing layer count");
  if (layers != net.topology.depth())
    throw ParseError(params_path.string() + ": layer count disagrees with topology");

  auto expect = [&](const char* key, std::size_t want) {
    std::size_t n = 0;
    if (!(in >> word >> n) || word != key)
      throw ParseError(params_path.string() + ": expected '" + key + "' section");
    if (n != want)
      throw ParseError(params_path.string() + ": " + key + " count disagrees with topology");
  };

  const auto& widths = net.topology.layer_widths();
  net.weights.resize(layers);
  net.biases.resize(layers);
  net.srelu.resize(layers - 1);
  for (int k = 0; k < layers; ++k) {
    expect("weights", static_cast<std::size_t>(net.topology.layer(k).edge_count()));
    net.weights[k].resize(net.topology.layer(k).edge_count());
    for (auto& v : net.weights[k]) v = get(in, params_path);
    expect("biases", static_cast<std::size_t>(widths[k + 1]));
    net.biases[k].resize(widths[k + 1]);
    for (auto& v : net.biases[k]) v = get(in, params_path);
    if (k < layers - 1) {
      expect("srelu", static_cast<std::size_t>(widths[k + 1]));
      net.srelu[k].resize(widths[k + 1]);
      for (auto& p : net.srelu[k]) {
        p.t_left = get(in, params_path);
        p.a_left = get(in, params_path);
        p.t_right = get(in, params_path);
        p.a_right = get(in, params_path);
      }
    }
  }
  if (in >> word)
    throw ParseError(params_path.string() + ": trailing content after parameters");
  net.validate();
  return net;
}

}  // namespace nnstd
